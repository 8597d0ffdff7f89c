#pragma once

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "error.hpp"
#include "lattice.hpp"

namespace dipsq {

// Shortest representation that round-trips, so identical inputs give identical bytes.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  if (b < e && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  require(res.ec == std::errc() && res.ptr == e, ErrorKind::schema, "not a number: '" + s + "'");
  return v;
}

class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  void add_row(std::vector<std::string> row) {
    require(row.size() == header_.size(), ErrorKind::invalid_argument, "row width does not match header");
    rows_.push_back(std::move(row));
  }

  void add(const std::vector<double>& row) {
    std::vector<std::string> r;
    for (double v : row) r.push_back(format_number(v));
    add_row(std::move(r));
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
      if (header_[i] == name) return i;
    throw Error(ErrorKind::schema, "missing column '" + name + "'");
  }

  std::vector<double> numbers(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      try {
        out.push_back(parse_number(rows_[r][c]));
      } catch (const Error&) {
        throw Error(ErrorKind::schema, "column '" + name + "', data row " + std::to_string(r + 1) + ": not a number: '" +
                                           rows_[r][c] + "'");
      }
    }
    return out;
  }

  void require_columns(const std::vector<std::string>& names) const {
    for (const auto& n : names) column(n);
  }

  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
  }

  static CsvTable parse(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    CsvTable t;
    auto split = [](const std::string& l) {
      std::vector<std::string> out;
      std::string cell;
      std::istringstream ls(l);
      while (std::getline(ls, cell, ',')) out.push_back(cell);
      if (!l.empty() && l.back() == ',') out.emplace_back();
      return out;
    };
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto cells = split(line);
      if (first) {
        t.header_ = cells;
        first = false;
      } else {
        require(cells.size() == t.header_.size(), ErrorKind::schema,
                "line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " fields, header has " +
                    std::to_string(t.header_.size()));
        t.rows_.push_back(cells);
      }
    }
    require(!first, ErrorKind::schema, "empty CSV input");
    return t;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline nlohmann::json realization_to_json(const Realization& r) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : r.sites) sites.push_back({s.x, s.y});
  return {{"L", r.spec.L}, {"a", r.spec.a}, {"f", r.spec.f}, {"J", r.spec.J}, {"boundary", to_string(r.spec.boundary)},
          {"seed", r.seed}, {"stream", r.stream}, {"sites", sites}};
}

inline Realization realization_from_json(const nlohmann::json& j) {
  try {
    Realization r;
    r.spec.L = j.at("L").get<int>();
    r.spec.a = j.at("a").get<double>();
    r.spec.f = j.at("f").get<double>();
    r.spec.J = j.at("J").get<double>();
    r.spec.boundary = boundary_from_string(j.value("boundary", std::string("open")));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.stream = j.at("stream").get<std::uint64_t>();
    for (const auto& s : j.at("sites")) r.sites.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
    r.spec.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema, std::string("realization JSON: ") + e.what());
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::invalid_argument, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const std::filesystem::path& p) { return CsvTable::parse(read_file(p)); }

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Write to a sibling temporary and rename over the target.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::invalid_argument, "cannot write " + tmp.string());
    out << content;
    out.flush();
    require(static_cast<bool>(out), ErrorKind::invalid_argument, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

// Collects the files of one run; the manifest goes out last so a directory with a
// manifest is always complete.
class RunOutput {
 public:
  explicit RunOutput(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    std::filesystem::remove(dir_ / "manifest.json");
  }

  const std::filesystem::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(dir_ / name, content);
    files_[name] = {content.size(), fnv1a64(content)};
  }

  void write(const std::string& name, const CsvTable& t) { write(name, t.str()); }

  void finish(nlohmann::json manifest) {
    nlohmann::json inv = nlohmann::json::array();
    for (const auto& [name, meta] : files_)
      inv.push_back({{"name", name}, {"bytes", meta.first}, {"fnv1a64", hex64(meta.second)}});
    manifest["files"] = inv;
    write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::pair<std::size_t, std::uint64_t>> files_;
};

}  // namespace dipsq
