#include "hsbe/diagnostics.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hsbe/errors.hpp"

namespace hsbe {

using nlohmann::json;

std::string fingerprint_hash(const Fingerprint& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (const auto& [k, v] : params) {
    feed(k);
    feed(v);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void DecayReport::validate() const {
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (!(series[i].t > series[i - 1].t)) throw DataError("report: times are not increasing");
  }
  for (const auto& p : series) {
    for (const auto& [k, v] : p.values) {
      if (k.rfind("norm", 0) == 0 && !(v >= 0.0)) throw DataError("report: negative norm " + k);
    }
  }
}

std::string DecayReport::to_json() const {
  json j;
  j["fingerprint"] = fingerprint;
  j["fingerprint_hash"] = fingerprint_hash(fingerprint);
  j["scalars"] = scalars;
  json fj = json::object();
  for (const auto& [k, f] : fits) {
    fj[k] = {{"rate", f.rate}, {"prefactor", f.prefactor}, {"residual", f.residual}};
  }
  j["fits"] = fj;
  json sj = json::array();
  for (const auto& p : series) sj.push_back({{"t", p.t}, {"values", p.values}});
  j["series"] = sj;
  return j.dump(2);
}

DecayReport DecayReport::from_json(const std::string& text) {
  DecayReport r;
  try {
    const json j = json::parse(text);
    r.fingerprint = j.at("fingerprint").get<Fingerprint>();
    r.scalars = j.at("scalars").get<std::map<std::string, double>>();
    for (const auto& [k, f] : j.at("fits").items()) {
      r.fits[k] = {f.at("rate").get<double>(), f.at("prefactor").get<double>(),
                   f.at("residual").get<double>()};
    }
    for (const auto& p : j.at("series")) {
      r.series.push_back({p.at("t").get<double>(),
                          p.at("values").get<std::map<std::string, double>>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("report: malformed JSON: ") + e.what());
  }
  return r;
}

void DecayReport::write_json(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << to_json() << '\n';
}

void DecayReport::write_series_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  std::set<std::string> keys;
  for (const auto& p : series) {
    for (const auto& [k, v] : p.values) keys.insert(k);
  }
  os << 't';
  for (const auto& k : keys) os << ',' << k;
  os << '\n' << std::setprecision(17);
  for (const auto& p : series) {
    os << p.t;
    for (const auto& k : keys) {
      os << ',';
      if (auto it = p.values.find(k); it != p.values.end()) os << it->second;
    }
    os << '\n';
  }
}

ConvergenceTable refinement_sweep(const std::string& parameter, const std::vector<double>& values,
                                  const SweepRunner& run) {
  if (values.empty()) throw std::invalid_argument("refinement sweep: no values");
  bool increasing = true, decreasing = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    increasing = increasing && values[i] > values[i - 1];
    decreasing = decreasing && values[i] < values[i - 1];
  }
  if (!increasing && !decreasing) throw std::invalid_argument("refinement sweep: values not monotone");

  ConvergenceTable table;
  table.parameter = parameter;
  for (double v : values) {
    try {
      table.rows.push_back({v, run(v)});
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "refinement sweep failed at " << parameter << " = " << v << ": " << e.what();
      throw Error(os.str());
    }
  }
  if (table.rows.size() < 3) return table;
  for (const auto& [key, unused] : table.rows.front().outputs) {
    std::vector<double> ratios, orders;
    for (std::size_t i = 0; i + 2 < table.rows.size(); ++i) {
      const double a = table.rows[i].outputs.at(key);
      const double b = table.rows[i + 1].outputs.at(key);
      const double c = table.rows[i + 2].outputs.at(key);
      const double r = (a - b) / (b - c);
      ratios.push_back(r);
      orders.push_back(std::log(std::abs(r)) / std::log(values[i] / values[i + 1]));
    }
    table.ratios[key] = ratios;
    table.orders[key] = orders;
  }
  return table;
}

void ConvergenceTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << parameter;
  if (!rows.empty()) {
    for (const auto& [k, v] : rows.front().outputs) os << ',' << k;
  }
  os << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.value;
    for (const auto& [k, v] : r.outputs) os << ',' << v;
    os << '\n';
  }
}

void freeze_regression(const RegressionBaseline& baseline, const std::filesystem::path& path) {
  json j;
  j["fingerprint"] = baseline.fingerprint;
  json vj = json::object();
  for (const auto& [k, v] : baseline.values) {
    vj[k] = {{"value", v.value}, {"kind", v.fitted ? "fitted" : "deterministic"}};
  }
  j["values"] = vj;
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string());
  os << j.dump(2) << '\n';
}

RegressionBaseline load_regression(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("regression baseline not found: " + path.string());
  RegressionBaseline b;
  try {
    const json j = json::parse(is);
    b.fingerprint = j.at("fingerprint").get<Fingerprint>();
    for (const auto& [k, v] : j.at("values").items()) {
      b.values[k] = {v.at("value").get<double>(), v.at("kind").get<std::string>() == "fitted"};
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("regression baseline malformed: ") + e.what());
  }
  return b;
}

RegressionResult compare_regression(const RegressionBaseline& current,
                                    const std::filesystem::path& path, std::optional<double> rtol) {
  const RegressionBaseline base = load_regression(path);
  if (base.fingerprint != current.fingerprint) {
    throw IncomparableError(fingerprint_hash(base.fingerprint),
                            fingerprint_hash(current.fingerprint));
  }
  RegressionResult result;
  for (const auto& [key, expected] : base.values) {
    const auto it = current.values.find(key);
    const double actual = it == current.values.end() ? std::nan("") : it->second.value;
    const double tol = rtol.value_or(expected.fitted ? 0.05 : 1e-9);
    const double scale = std::max(std::abs(expected.value), 1e-300);
    const double rel = std::abs(actual - expected.value) / scale;
    const bool ok = expected.value == actual || rel <= tol;
    if (!ok) {
      result.pass = false;
      result.failures.push_back({key, expected.value, actual, rel});
    }
  }
  return result;
}

}  // namespace hsbe
