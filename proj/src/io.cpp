#include "hphi4/io.hpp"

#include <bit>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hphi4/errors.hpp"

namespace hphi4 {

namespace {

void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw IoError("path files are little-endian; big-endian hosts unsupported");
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_doubles(std::FILE* f, const double* data, std::size_t count,
                   const std::string& file) {
  if (std::fwrite(data, sizeof(double), count, f) != count)
    throw IoError("short write: " + file);
}

void read_doubles(std::FILE* f, double* data, std::size_t count, const std::string& file) {
  if (std::fread(data, sizeof(double), count, f) != count)
    throw IoError("short read: " + file);
}

}  // namespace

void save_field_path(const std::string& file, PathHeader header, const FieldPath& path) {
  require_little_endian();
  if (!path.basis) throw UsageError("save_field_path: path has no basis");
  if (path.times.size() != path.coeff.size())
    throw UsageError("save_field_path: time and coefficient counts differ");
  header.dimension = path.basis->dimension;
  header.modes = path.basis->mode_count();
  header.rows = static_cast<std::int64_t>(path.times.size());

  nlohmann::json j{{"format", "hphi4-path"},
                   {"version", 1},
                   {"kind", header.kind},
                   {"dimension", header.dimension},
                   {"modes", header.modes},
                   {"level", header.level},
                   {"seed", header.seed},
                   {"replica", header.replica},
                   {"dt", header.dt},
                   {"rows", header.rows},
                   {"generator", header.generator}};
  const std::string line = j.dump() + "\n";

  FilePtr f(std::fopen(file.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + file);
  if (std::fwrite(line.data(), 1, line.size(), f.get()) != line.size())
    throw IoError("short write: " + file);
  write_doubles(f.get(), path.times.data(), path.times.size(), file);
  for (const auto& row : path.coeff) {
    if (row.size() != static_cast<Eigen::Index>(header.modes))
      throw UsageError("save_field_path: coefficient row size mismatch");
    write_doubles(f.get(), row.data(), static_cast<std::size_t>(row.size()), file);
  }
  if (std::fflush(f.get()) != 0) throw IoError("flush failed: " + file);
}

FieldPath load_field_path(const std::string& file, const BasisPtr& basis,
                          PathHeader* header_out) {
  require_little_endian();
  if (!basis) throw UsageError("load_field_path: no basis supplied");
  FilePtr f(std::fopen(file.c_str(), "rb"));
  if (!f) throw IoError("cannot open: " + file);

  std::string line;
  for (int c = std::fgetc(f.get()); c != '\n'; c = std::fgetc(f.get())) {
    if (c == EOF) throw IoError("missing header line: " + file);
    if (line.size() > 65536) throw IoError("header line too long: " + file);
    line.push_back(static_cast<char>(c));
  }
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", "") != "hphi4-path")
    throw IoError("not a path file: " + file);
  if (j.value("version", 0) != 1) throw IoError("unsupported path version: " + file);

  PathHeader header;
  try {
    header.kind = j.at("kind").get<std::string>();
    header.dimension = j.at("dimension").get<int>();
    header.modes = j.at("modes").get<int>();
    header.level = j.at("level").get<int>();
    header.seed = j.at("seed").get<std::uint64_t>();
    header.replica = j.at("replica").get<std::uint32_t>();
    header.dt = j.at("dt").get<double>();
    header.rows = j.at("rows").get<std::int64_t>();
    header.generator = j.at("generator").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad path header in " + file + ": " + e.what());
  }
  if (header.dimension != basis->dimension)
    throw IoError("dimension mismatch loading " + file);
  if (header.modes != basis->mode_count())
    throw IoError("mode count mismatch loading " + file);
  if (header.rows < 0) throw IoError("negative row count in " + file);

  FieldPath path;
  path.basis = basis;
  path.times.resize(static_cast<std::size_t>(header.rows));
  read_doubles(f.get(), path.times.data(), path.times.size(), file);
  path.coeff.reserve(path.times.size());
  for (std::int64_t r = 0; r < header.rows; ++r) {
    Eigen::VectorXd row(header.modes);
    read_doubles(f.get(), row.data(), static_cast<std::size_t>(header.modes), file);
    path.coeff.push_back(std::move(row));
  }
  if (std::fgetc(f.get()) != EOF) throw IoError("trailing bytes in " + file);
  if (header_out) *header_out = header;
  return path;
}

}  // namespace hphi4
