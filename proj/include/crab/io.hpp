#pragma once

// Pulse documents (JSON) and CSV output.
//
// Doubles are written by nlohmann::json in shortest round-trip form, so a
// pulse read back from disk reproduces every coefficient bit for bit.

#include "crab/pulse.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace crab {

using json = nlohmann::json;

class parse_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// 17 significant digits, scientific notation.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

/// Minimal CSV writer: a header line, then rows of already formatted cells.
class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  class Row {
  public:
    Row& operator<<(double v) { return cell(format_double(v)); }
    Row& operator<<(int v) { return cell(std::to_string(v)); }
    Row& operator<<(long v) { return cell(std::to_string(v)); }
    Row& operator<<(unsigned long v) { return cell(std::to_string(v)); }
    Row& operator<<(unsigned long long v) { return cell(std::to_string(v)); }
    Row& operator<<(long long v) { return cell(std::to_string(v)); }
    Row& operator<<(bool v) { return cell(v ? "1" : "0"); }
    Row& operator<<(const std::string& v) { return cell(v); }
    Row& operator<<(const char* v) { return cell(v); }

  private:
    friend class CsvWriter;
    Row& cell(std::string s) {
      cells_.push_back(std::move(s));
      return *this;
    }
    std::vector<std::string> cells_;
  };

  void add(Row r) {
    if (r.cells_.size() != header_.size())
      throw std::logic_error("CsvWriter: row has " + std::to_string(r.cells_.size()) + " cells, header has " +
                             std::to_string(header_.size()));
    rows_.push_back(std::move(r.cells_));
  }

  [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
  [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }

  void write(std::ostream& os) const {
    auto line = [&os](const std::vector<std::string>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Pulse documents

inline json to_json(const BaseGuess& g) {
  return std::visit(
      [](const auto& k) -> json {
        using G = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<G, guess::Constant>) {
          return {{"kind", "constant"}, {"value", k.value}};
        } else if constexpr (std::is_same_v<G, guess::LinearRamp>) {
          return {{"kind", "linear"}, {"start", k.start}, {"end", k.end}};
        } else {
          return {{"kind", "table"}, {"times", k.times}, {"values", k.values}};
        }
      },
      g.kind());
}

inline std::string to_string(RegularizerKind k) { return k == RegularizerKind::None ? "none" : "polynomial_bump"; }

inline RegularizerKind regularizer_from_string(const std::string& s) {
  if (s == "polynomial_bump") return RegularizerKind::PolynomialBump;
  if (s == "none") return RegularizerKind::None;
  throw parse_error("unknown regularizer '" + s + "' (expected polynomial_bump or none)");
}

inline json to_json(const ControlField& c) {
  json j;
  j["base"] = to_json(c.base());
  j["regularizer"] = to_string(c.regularizer().kind);
  j["total_time"] = c.total_time();
  j["n_components"] = c.params().n_components();
  j["amplitudes_a"] = c.params().amplitudes_a;
  j["amplitudes_b"] = c.params().amplitudes_b;
  j["frequencies"] = c.params().frequencies;
  j["seed"] = c.seed() ? json(*c.seed()) : json(nullptr);
  return j;
}

namespace detail {

template <class T>
T field_as(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw parse_error(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw parse_error(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline BaseGuess base_guess_from_json(const json& j, const std::string& where = "base") {
  const auto kind = detail::field_as<std::string>(j, "kind", where);
  if (kind == "constant") return guess::Constant{detail::field_as<double>(j, "value", where)};
  if (kind == "linear")
    return guess::LinearRamp{detail::field_as<double>(j, "start", where), detail::field_as<double>(j, "end", where)};
  if (kind == "table")
    return guess::Table{detail::field_as<std::vector<double>>(j, "times", where),
                        detail::field_as<std::vector<double>>(j, "values", where)};
  throw parse_error(where + ".kind: unknown base guess '" + kind + "' (expected constant, linear or table)");
}

inline ControlField control_from_json(const json& j, const std::string& where = "field") {
  CrabParams p;
  p.amplitudes_a = detail::field_as<std::vector<double>>(j, "amplitudes_a", where);
  p.amplitudes_b = detail::field_as<std::vector<double>>(j, "amplitudes_b", where);
  p.frequencies = detail::field_as<std::vector<double>>(j, "frequencies", where);
  const auto nc = detail::field_as<std::size_t>(j, "n_components", where);
  if (nc != p.frequencies.size()) throw parse_error(where + ".n_components disagrees with the coefficient arrays");
  std::optional<std::uint64_t> seed;
  if (j.contains("seed") && !j.at("seed").is_null()) seed = detail::field_as<std::uint64_t>(j, "seed", where);
  const double T = detail::field_as<double>(j, "total_time", where);
  const auto reg = regularizer_from_string(detail::field_as<std::string>(j, "regularizer", where));
  try {
    return ControlField(base_guess_from_json(j.at("base"), where + ".base"), std::move(p), BoundaryRegularizer(reg, T), seed);
  } catch (const std::invalid_argument& e) {
    throw parse_error(where + ": " + e.what());
  }
}

/// A stored pulse: the control fields plus the cost they achieved and
/// enough context to rebuild the problem.
struct PulseDocument {
  std::vector<ControlField> controls;
  double best_cost = 0.0;
  json context = json::object();
};

inline constexpr const char* pulse_format_tag = "crab-pulse";

inline json to_json(const PulseDocument& doc) {
  json j;
  j["format"] = pulse_format_tag;
  j["version"] = 1;
  j["best_cost"] = doc.best_cost;
  j["context"] = doc.context;
  j["fields"] = json::array();
  for (const auto& c : doc.controls) j["fields"].push_back(to_json(c));
  return j;
}

inline PulseDocument pulse_from_json(const json& j) {
  if (!j.is_object()) throw parse_error("pulse document: expected a JSON object");
  if (detail::field_as<std::string>(j, "format", "pulse document") != pulse_format_tag)
    throw parse_error("pulse document: format tag is not '" + std::string(pulse_format_tag) + "'");
  PulseDocument doc;
  doc.best_cost = detail::field_as<double>(j, "best_cost", "pulse document");
  if (j.contains("context")) doc.context = j.at("context");
  if (!j.contains("fields") || !j.at("fields").is_array() || j.at("fields").empty())
    throw parse_error("pulse document: 'fields' must be a non-empty array");
  for (std::size_t i = 0; i < j.at("fields").size(); ++i)
    doc.controls.push_back(control_from_json(j.at("fields")[i], "fields[" + std::to_string(i) + "]"));
  return doc;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open '" + path + "'");
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw parse_error(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline PulseDocument read_pulse(const std::string& path) { return pulse_from_json(read_json_file(path)); }

inline void write_pulse(const std::string& path, const PulseDocument& doc) { write_text_file(path, to_json(doc).dump(2) + "\n"); }

}  // namespace crab
