#include <Eigen/Core>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "hphi4/config.hpp"
#include "hphi4/errors.hpp"
#include "hphi4/studies.hpp"

namespace {

void print_usage(std::ostream& out) {
  out << "usage: hphi4 <study> --config <path> [--set key=value ...] [--out <dir>]\n"
      << "       hphi4 verify <summary.json>\n"
      << "studies:";
  for (const std::string& name : hphi4::study_names()) out << " " << name;
  out << "\n"
      << "exit codes: 0 ok, 2 config error, 3 capacity, 4 assertion failure, 5 I/O\n";
}

void apply_thread_cap() {
  const char* raw = std::getenv("HPHI4_THREADS");
  if (raw == nullptr) return;
  char* end = nullptr;
  const long n = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || n < 1) {
    throw hphi4::ConfigError(std::string("HPHI4_THREADS must be a positive integer, got \"") +
                             raw + "\"");
  }
  // all per-run work is sequential; the cap binds whatever Eigen would
  // otherwise parallelize internally
  Eigen::setNbThreads(static_cast<int>(n));
}

int run_cli(int argc, char** argv) {
  using namespace hphi4;
  apply_thread_cap();
  if (argc < 2) {
    print_usage(std::cerr);
    throw UsageError("missing command");
  }
  const std::string command = argv[1];
  if (command == "--help" || command == "-h" || command == "help") {
    print_usage(std::cout);
    return 0;
  }
  if (command == "verify") {
    if (argc != 3) throw UsageError("verify takes exactly one summary file");
    verify_summary(argv[2]);
    std::cout << "verify: pass " << argv[2] << "\n";
    return 0;
  }

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else if (arg == "--set" && i + 1 < argc) {
      overrides.emplace_back(argv[++i]);
    } else if (arg == "--out" && i + 1 < argc) {
      out_dir = argv[++i];
    } else {
      print_usage(std::cerr);
      throw UsageError("unrecognized or incomplete argument \"" + arg + "\"");
    }
  }
  if (config_path.empty()) throw UsageError("--config <path> is required");

  RunConfig config = RunConfig::from_file(config_path);
  for (const std::string& assignment : overrides) config.apply_override(assignment);
  // the command names the study; any study key in the file is superseded
  config.apply_override("study=" + command);
  if (out_dir.empty()) out_dir = config.get_string("out_dir", ".");

  const StudyResult result = run_study(command, config, out_dir);
  for (const CheckRecord& c : result.checks) {
    std::cout << (c.pass ? "[ok]   " : "[FAIL] ") << c.name << ": " << c.value << " "
              << c.op << " " << c.bound << "\n";
  }
  std::cout << "summary: " << result.summary_file << "\n";
  if (!result.pass) {
    for (const CheckRecord& c : result.checks) {
      if (!c.pass) {
        std::cerr << "hphi4: check failed: " << c.name << "\n";
        break;
      }
    }
    return 4;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const hphi4::ConfigError& e) {
    std::cerr << "hphi4: " << e.what() << "\n";
    return 2;
  } catch (const hphi4::UsageError& e) {
    std::cerr << "hphi4: " << e.what() << "\n";
    return 2;
  } catch (const hphi4::CapacityError& e) {
    std::cerr << "hphi4: " << e.what() << "\n";
    return 3;
  } catch (const hphi4::NumericalError& e) {
    std::cerr << "hphi4: " << e.what() << "\n";
    return 4;
  } catch (const hphi4::IoError& e) {
    std::cerr << "hphi4: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "hphi4: unexpected error: " << e.what() << "\n";
    return 4;
  }
}
