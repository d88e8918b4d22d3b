#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "functionals.hpp"
#include "lines.hpp"
#include "mild.hpp"
#include "semigroup.hpp"

namespace blowlab {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

enum class ExperimentKind {
  operator_check,
  kernel_check,
  picard,
  simulate,
  blowup_scan,
  functional_scan,
  exponent_table,
  weak_residual
};

inline const std::vector<std::pair<ExperimentKind, std::string>>& experiment_names() {
  static const std::vector<std::pair<ExperimentKind, std::string>> names{
      {ExperimentKind::operator_check, "operator-check"}, {ExperimentKind::kernel_check, "kernel-check"},
      {ExperimentKind::picard, "picard"},                 {ExperimentKind::simulate, "simulate"},
      {ExperimentKind::blowup_scan, "blowup-scan"},       {ExperimentKind::functional_scan, "functional-scan"},
      {ExperimentKind::exponent_table, "exponent-table"}, {ExperimentKind::weak_residual, "weak-residual"}};
  return names;
}

inline std::string to_string(ExperimentKind k) {
  for (const auto& [kind, name] : experiment_names())
    if (kind == k) return name;
  return "?";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  for (const auto& [kind, name] : experiment_names())
    if (name == s) return kind;
  throw std::invalid_argument("unknown experiment '" + s + "'");
}

// ---------------------------------------------------------------------------
// configuration

/// Every key the experiments read, with its default.
inline json default_config() {
  return json{
      {"experiment", "exponent-table"},
      {"system", {{"tag", "euclidean"}, {"n", 1}, {"k", 1}, {"matrix", nullptr}}},
      {"grid", {{"half_width", 5.0}, {"points", 101}}},
      {"p", 2.0},
      {"forcing", {{"kind", "zero"}, {"eps", 0.0}, {"lambda", 2.0}, {"width", 1.0}}},
      {"u0", {{"kind", "gaussian"}, {"amplitude", 0.5}, {"width", 1.0}}},
      {"picard",
       {{"J", 64}, {"tolerance", 1e-10}, {"q_star", 0.5}, {"max_iterations", 100}, {"T", nullptr},
        {"threshold", 1e8}}},
      {"imex",
       {{"dt0", 1e-3}, {"dt_min", 1e-10}, {"threshold", 1e8}, {"horizon", 100.0}, {"zero_diffusion", false},
        {"output_times", json::array()}, {"compare_picard", false}}},
      {"kernel", {{"t", json::array({0.5})}, {"method", "auto"}, {"probes", 3}, {"mass_tolerance", 1e-8}}},
      {"operator", {{"points", json::array({15, 31, 63})}, {"u_axes", nullptr}}},
      {"functional",
       {{"family", "parabolic"}, {"kappa", 0}, {"quadrature_tolerance", 1e-6}, {"forcing_in_F", true}}},
      {"exponent_table",
       {{"rows", json::array({json{{"kind", "parabolic"}, {"n", 3}, {"expected", "3/2"}},
                              json{{"kind", "constant"}, {"n", 4}, {"expected", "2"}},
                              json{{"kind", "grushin"}, {"n", 2}, {"k", 2}, {"expected", "2"}},
                              json{{"kind", "engel"}, {"n", 3}, {"expected", "7/5"}}})},
        {"p", nullptr}}},
      {"weak", {{"levels", 3}, {"T", 0.5}, {"points0", 41}, {"J0", 16}}},
      {"sweep", {{"T", json::array()}, {"eps", json::array()}, {"amplitude", json::array()}}},
      {"tolerances",
       {{"order", 0.2},
        {"slope", 0.05},
        {"defect", 1e-8},
        {"contraction", 0.6},
        {"residual", 1e-8},
        {"uniqueness", 1e-7},
        {"cross_solver", 1e-3},
        {"gaussian_peak", 1e-2},
        {"bound_factor", 1.1},
        {"weak_order", 1.0}}},
      {"output", "out"},
      {"workers", 0},
      {"seed", 1},
  };
}

/// Recursive merge where objects combine key by key and anything else (null included) replaces.
inline void deep_merge(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object()) deep_merge(base[it.key()], it.value());
    else base[it.key()] = it.value();
  }
}

/// "a.b.c=value" applied to the config; value is parsed as JSON when it can be.
inline void apply_override(json& cfg, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &cfg;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) throw std::invalid_argument("unknown config key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->contains(parts.back())) throw std::invalid_argument("unknown config key '" + key + "'");
  (*node)[parts.back()] = value;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::exponent_table;
  json values = default_config();

  /// Defaults, then `file` (merge patch), then the overrides in order.
  static ExperimentConfig load(const std::string& experiment, const std::optional<std::string>& file,
                               const std::vector<std::string>& overrides = {}) {
    ExperimentConfig c;
    if (file) {
      std::ifstream in(*file);
      if (!in) throw std::invalid_argument("cannot read config '" + *file + "'");
      json user;
      try {
        user = json::parse(in);
      } catch (const json::parse_error& e) {
        throw std::invalid_argument("config '" + *file + "': " + e.what());
      }
      if (user.contains("experiment") && !experiment.empty() && user["experiment"] != experiment) {
        throw std::invalid_argument("config is for '" + user["experiment"].get<std::string>() + "', not '" + experiment +
                                    "'");
      }
      check_keys(c.values, user, "");
      deep_merge(c.values, user);
    }
    if (!experiment.empty()) c.values["experiment"] = experiment;
    for (const auto& o : overrides) apply_override(c.values, o);
    c.kind = parse_experiment_kind(c.values["experiment"].get<std::string>());
    c.validate();
    return c;
  }
  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    check_keys(c.values, j, "");
    deep_merge(c.values, j);
    c.kind = parse_experiment_kind(c.values["experiment"].get<std::string>());
    c.validate();
    return c;
  }

  void validate() const {
    const auto& v = values;
    if (!(v["p"].get<double>() > 1.0)) throw std::invalid_argument("config: p must exceed 1");
    system();
    if (v["grid"]["points"].get<int>() < 3) throw std::invalid_argument("config: grid.points must be >= 3");
    if (!(v["grid"]["half_width"].get<double>() > 0.0)) throw std::invalid_argument("config: grid.half_width must be positive");
    parse_forcing_kind(v["forcing"]["kind"].get<std::string>());
    std::string u0 = v["u0"]["kind"].get<std::string>();
    if (u0 != "zero" && u0 != "gaussian" && u0 != "constant") throw std::invalid_argument("config: unknown u0 kind '" + u0 + "'");
    parse_family_kind(v["functional"]["family"].get<std::string>());
    parse_exp_method(v["kernel"]["method"].get<std::string>());
    if (v["workers"].get<int>() < 0) throw std::invalid_argument("config: workers must be >= 0");
  }

  double p() const { return values["p"].get<double>(); }
  VectorFieldSystem system() const {
    const auto& s = values["system"];
    SystemTag tag = parse_system_tag(s["tag"].get<std::string>());
    std::vector<std::vector<double>> m;
    if (!s["matrix"].is_null()) m = s["matrix"].get<std::vector<std::vector<double>>>();
    return builtin_system(tag, s["n"].get<std::size_t>(), s["k"].get<int>(), m);
  }
  Grid grid() const { return grid_with(values["grid"]["points"].get<int>()); }
  Grid grid_with(int points) const {
    return Grid::uniform(values["system"]["n"].get<std::size_t>(), values["grid"]["half_width"].get<double>(), points);
  }
  Forcing forcing() const {
    const auto& f = values["forcing"];
    return Forcing{parse_forcing_kind(f["kind"].get<std::string>()), f["eps"].get<double>(), f["lambda"].get<double>(),
                   f["width"].get<double>()};
  }
  GridFunction initial(const Grid& g) const {
    const auto& u = values["u0"];
    std::string kind = u["kind"].get<std::string>();
    double a = u["amplitude"].get<double>(), w = u["width"].get<double>();
    if (kind == "zero") a = 0.0;
    return sample(
        [&](std::span<const double> x) {
          if (kind == "constant") return a;
          double r2 = 0.0;
          for (double v : x) r2 += v * v;
          return a * std::exp(-r2 / (w * w));
        },
        g);
  }
  ProblemSpec problem(const Grid& g) const { return ProblemSpec(system(), g, p(), forcing().on(g), initial(g)); }
  PicardConfig picard() const {
    const auto& c = values["picard"];
    PicardConfig pc;
    pc.J = c["J"].get<int>();
    pc.tolerance = c["tolerance"].get<double>();
    pc.q_star = c["q_star"].get<double>();
    pc.max_iterations = c["max_iterations"].get<int>();
    pc.blowup_threshold = c["threshold"].get<double>();
    return pc;
  }
  IMEXConfig imex() const {
    const auto& c = values["imex"];
    IMEXConfig ic;
    ic.dt0 = c["dt0"].get<double>();
    ic.dt_min = c["dt_min"].get<double>();
    ic.blowup_threshold = c["threshold"].get<double>();
    ic.horizon = c["horizon"].get<double>();
    ic.zero_diffusion = c["zero_diffusion"].get<bool>();
    ic.output_times = c["output_times"].get<std::vector<double>>();
    return ic;
  }
  double tol(const std::string& key) const { return values["tolerances"][key].get<double>(); }
  unsigned workers() const {
    int w = values["workers"].get<int>();
    if (w > 0) return static_cast<unsigned>(w);
    return std::max(1u, std::thread::hardware_concurrency());
  }

 private:
  static void check_keys(const json& defaults, const json& user, const std::string& prefix) {
    if (!user.is_object()) throw std::invalid_argument("config: expected an object at '" + prefix + "'");
    for (auto it = user.begin(); it != user.end(); ++it) {
      std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (!defaults.contains(it.key())) throw std::invalid_argument("config: unknown key '" + path + "'");
      const json& d = defaults[it.key()];
      if (d.is_object() && it.value().is_object() && it.key() != "matrix") check_keys(d, it.value(), path);
    }
  }
};

// ---------------------------------------------------------------------------
// results

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Short form for report text; CSV keeps format_double.
inline std::string format_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) out += format_double(v);
            else if constexpr (std::is_same_v<V, long long>) out += std::to_string(v);
            else out += v;
          },
          row[i]);
    }
    out += "\n";
  }
  return out;
}

struct Check {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  /// "abs" |m - e| <= tol, "le" m <= e + tol, "ge" m >= e - tol, "bool" pass given
  std::string relation = "abs";
  bool pass = false;
  std::string detail;
};

inline Check make_check(std::string name, double measured, double expected, double tolerance, std::string relation,
                        std::string detail = {}) {
  Check c{std::move(name), measured, expected, tolerance, std::move(relation), false, std::move(detail)};
  if (c.relation == "abs") c.pass = std::abs(measured - expected) <= tolerance;
  else if (c.relation == "le") c.pass = measured <= expected + tolerance;
  else if (c.relation == "ge") c.pass = measured >= expected - tolerance;
  else throw std::invalid_argument("make_check: unknown relation");
  if (!std::isfinite(measured)) c.pass = false;
  return c;
}

inline Check bool_check(std::string name, bool pass, std::string detail = {}) {
  Check c;
  c.name = std::move(name);
  c.relation = "bool";
  c.pass = pass;
  c.measured = pass ? 1.0 : 0.0;
  c.expected = 1.0;
  c.detail = std::move(detail);
  return c;
}

inline std::string format_check(const Check& c) {
  std::ostringstream os;
  os << (c.pass ? "PASS" : "FAIL") << "  " << c.name;
  if (c.relation != "bool") {
    os.precision(6);
    os << ": measured " << c.measured;
    if (c.relation == "abs") os << ", expected " << c.expected << " +- " << c.tolerance;
    else if (c.relation == "le") os << ", required <= " << c.expected + c.tolerance;
    else os << ", required >= " << c.expected - c.tolerance;
  }
  if (!c.detail.empty()) os << " (" << c.detail << ")";
  return os.str();
}

struct LogLogPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;  // positive data
  std::vector<double> y;
  std::optional<double> theory_slope;
};

struct PointFailure {
  std::size_t index = 0;
  std::string parameter;
  std::string error;
};

struct ExperimentOutput {
  Table table;
  std::vector<Check> checks;
  std::vector<PointFailure> failures;
  std::optional<LogLogPlot> plot;
  json summary = json::object();
};

/// Calls fn(i) for i < count on up to `workers` threads; exceptions are kept per index.
inline std::vector<std::optional<std::string>> parallel_for(std::size_t count, unsigned workers,
                                                            const std::function<void(std::size_t)>& fn) {
  std::vector<std::optional<std::string>> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (w == 1) {
    worker();
    return errors;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < w; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return errors;
}

// ---------------------------------------------------------------------------
// svg

inline std::string svg_loglog(const LogLogPlot& p) {
  const double W = 640, H = 480, ml = 80, mr = 20, mt = 40, mb = 60;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    if (p.x[i] > 0 && p.y[i] > 0 && std::isfinite(p.y[i])) {
      lx.push_back(std::log10(p.x[i]));
      ly.push_back(std::log10(p.y[i]));
    }
  }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" "
     << "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << p.title << "</text>\n";
  if (lx.size() < 2) {
    os << "<text x=\"" << W / 2 << "\" y=\"" << H / 2 << "\" text-anchor=\"middle\">not enough data</text>\n</svg>\n";
    return os.str();
  }
  auto [xmin_it, xmax_it] = std::minmax_element(lx.begin(), lx.end());
  auto [ymin_it, ymax_it] = std::minmax_element(ly.begin(), ly.end());
  double x0 = std::floor(*xmin_it), x1 = std::ceil(*xmax_it), y0 = std::floor(*ymin_it), y1 = std::ceil(*ymax_it);
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto X = [&](double v) { return ml + (v - x0) / (x1 - x0) * (W - ml - mr); };
  auto Y = [&](double v) { return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb); };
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  int ystep = std::max(1, static_cast<int>((y1 - y0) / 10));
  for (double d = x0; d <= x1; d += 1) {
    os << "<line x1=\"" << X(d) << "\" x2=\"" << X(d) << "\" y1=\"" << H - mb << "\" y2=\"" << H - mb + 5
       << "\" stroke=\"black\"/><text x=\"" << X(d) << "\" y=\"" << H - mb + 20 << "\" text-anchor=\"middle\">1e"
       << static_cast<int>(d) << "</text>\n";
  }
  for (double d = y0; d <= y1; d += ystep) {
    os << "<line x1=\"" << ml - 5 << "\" x2=\"" << ml << "\" y1=\"" << Y(d) << "\" y2=\"" << Y(d)
       << "\" stroke=\"black\"/><text x=\"" << ml - 8 << "\" y=\"" << Y(d) + 4 << "\" text-anchor=\"end\">1e"
       << static_cast<int>(d) << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << p.x_label << "</text>\n";
  os << "<text x=\"18\" y=\"" << H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << H / 2 << ")\">"
     << p.y_label << "</text>\n";
  auto fit = fit_line(lx, ly);
  double ax = *xmin_it, bx = *xmax_it;
  os << "<line x1=\"" << X(ax) << "\" y1=\"" << Y(fit.intercept + fit.slope * ax) << "\" x2=\"" << X(bx) << "\" y2=\""
     << Y(fit.intercept + fit.slope * bx) << "\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
  std::ostringstream legend;
  legend.precision(4);
  legend << "fit slope " << fit.slope;
  if (p.theory_slope) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(ly.size());
    double s = *p.theory_slope;
    // clip the reference line to the plot box
    auto clip = [&](double x) { return std::clamp(my + s * (x - mx), y0, y1); };
    double cx0 = s == 0 ? ax : std::clamp(mx + (clip(ax) - my) / s, ax, bx);
    double cx1 = s == 0 ? bx : std::clamp(mx + (clip(bx) - my) / s, ax, bx);
    os << "<line x1=\"" << X(cx0) << "\" y1=\"" << Y(my + s * (cx0 - mx)) << "\" x2=\"" << X(cx1) << "\" y2=\""
       << Y(my + s * (cx1 - mx)) << "\" stroke=\"firebrick\" stroke-dasharray=\"6 4\"/>\n";
    legend << ", reference slope " << s;
  }
  for (std::size_t i = 0; i < lx.size(); ++i) {
    os << "<circle cx=\"" << X(lx[i]) << "\" cy=\"" << Y(ly[i]) << "\" r=\"4\" fill=\"black\"/>\n";
  }
  os << "<text x=\"" << ml + 10 << "\" y=\"" << mt + 18 << "\">" << legend.str() << "</text>\n</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// experiments

namespace detail {

inline std::vector<double> doubles(const json& j) { return j.get<std::vector<double>>(); }

inline ExperimentOutput run_operator_check(const ExperimentConfig& cfg) {
  auto sys = cfg.system();
  const std::size_t n = sys.dim();
  std::vector<int> axes;
  const auto& ua = cfg.values["operator"]["u_axes"];
  if (ua.is_null()) {
    for (std::size_t i = 0; i < n; ++i) axes.push_back(static_cast<int>(i) + 1);
  } else {
    axes = ua.get<std::vector<int>>();
  }
  CoefficientExpr u = CoefficientExpr::constant(n, 1.0);
  for (int a : axes) {
    if (a < 1 || static_cast<std::size_t>(a) > n) throw std::invalid_argument("operator.u_axes out of range");
    u = u * CoefficientExpr::sin_of(n, static_cast<std::size_t>(a - 1));
  }
  std::vector<Grid> grids;
  for (int N : cfg.values["operator"]["points"].get<std::vector<int>>()) grids.push_back(cfg.grid_with(N));
  auto rep = convergence_order(sys, u, grids);
  ExperimentOutput out;
  out.table.header = {"points", "h", "error"};
  for (std::size_t i = 0; i < grids.size(); ++i) {
    out.table.rows.push_back({static_cast<long long>(grids[i].points(0)), rep.spacings[i], rep.errors[i]});
  }
  if (rep.indeterminate) {
    out.checks.push_back(bool_check("discrete operator exact on test function", true, "errors at roundoff level"));
  } else {
    out.checks.push_back(make_check("convergence order (" + to_string(sys.tag()) + ")", rep.order, 2.0, cfg.tol("order"), "abs"));
  }
  out.summary = {{"order", rep.indeterminate ? json(nullptr) : json(rep.order)}, {"non_monotone", rep.non_monotone}};
  out.plot = LogLogPlot{"consistency error", "h", "max error", rep.spacings, rep.errors, 2.0};
  return out;
}

inline ExperimentOutput run_kernel_check(const ExperimentConfig& cfg) {
  auto sys = cfg.system();
  Grid g = cfg.grid();
  auto op = assemble_operator(sys, g);
  SemigroupAction sg(op, parse_exp_method(cfg.values["kernel"]["method"].get<std::string>()));
  std::vector<double> zero(g.dim(), 0.0);
  std::size_t center = g.nearest(zero);
  std::vector<std::size_t> sources{center};
  std::mt19937_64 rng(cfg.values["seed"].get<std::uint64_t>());
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  for (int i = 0; i < cfg.values["kernel"]["probes"].get<int>(); ++i) sources.push_back(pick(rng));
  const double mass_tol = cfg.values["kernel"]["mass_tolerance"].get<double>();
  ExperimentOutput out;
  out.table.header = {"t", "source", "mass", "min_value", "negative_fraction", "defect"};
  double worst_mass = 0.0, worst_defect = 0.0;
  Eigen::VectorXd v = cfg.initial(g).values;
  if (v.cwiseAbs().maxCoeff() == 0.0) v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.size()));
  for (double t : doubles(cfg.values["kernel"]["t"])) {
    double defect = semigroup_defect(sg, t, t, v) / std::max(1.0, v.cwiseAbs().maxCoeff());
    worst_defect = std::max(worst_defect, defect);
    for (std::size_t src : sources) {
      auto slice = sg.kernel_slice(src, t);
      double m = slice.mass();
      worst_mass = std::max(worst_mass, m);
      out.table.rows.push_back({t, static_cast<long long>(src), m, slice.min_value(), slice.negative_fraction(), defect});
    }
    if (sys.tag() == SystemTag::euclidean && g.dim() == 1) {
      auto slice = sg.kernel_slice(center, t);
      double peak = slice.values.values[static_cast<Eigen::Index>(center)];
      double exact = gaussian_kernel(1, t, 0.0);
      out.checks.push_back(make_check("gaussian kernel peak at t=" + format_double(t), std::abs(peak - exact) / exact, 0.0,
                                      cfg.tol("gaussian_peak"), "le"));
    }
  }
  out.checks.push_back(make_check("kernel mass", worst_mass, 1.0, mass_tol, "le", "sub-Markov bound"));
  out.checks.push_back(make_check("semigroup defect", worst_defect, 0.0, cfg.tol("defect"), "le", to_string(sg.method())));
  out.summary = {{"max_mass", worst_mass}, {"max_defect", worst_defect}, {"method", to_string(sg.method())}};
  return out;
}

inline ExperimentOutput run_picard(const ExperimentConfig& cfg) {
  Grid g = cfg.grid();
  auto spec = cfg.problem(g);
  SemigroupAction sg(assemble_operator(spec.system, g));
  PicardConfig pc = cfg.picard();
  double delta = delta_bound(spec.u0, spec.f);
  double T = cfg.values["picard"]["T"].is_null() ? local_time_horizon(delta, spec.p, pc)
                                                 : cfg.values["picard"]["T"].get<double>();
  auto res = picard_solve(spec, T, pc, sg);
  ExperimentOutput out;
  out.table.header = {"iteration", "difference"};
  for (std::size_t k = 0; k < res.history.size(); ++k) out.table.rows.push_back({static_cast<long long>(k + 1), res.history[k]});
  double residual = duhamel_residual(res.trajectory, spec, sg);
  TimeMesh mesh(T, pc.J);
  Trajectory other = Trajectory::constant(mesh, g, -1.2 * spec.u0.values);
  other.states[0] = spec.u0.values;
  auto second = picard_solve(spec, T, pc, sg, other);
  double gap = distance(res.trajectory, second.trajectory);
  out.checks.push_back(make_check("contraction rate", res.contraction_rate, 0.0, cfg.tol("contraction"), "le"));
  out.checks.push_back(make_check("Duhamel residual", residual, 0.0, cfg.tol("residual"), "le"));
  out.checks.push_back(make_check("distinct initial iterates agree", gap, 0.0, cfg.tol("uniqueness"), "le"));
  out.summary = {{"T", T},           {"delta", delta},       {"iterations", res.iterations},
                 {"rate", res.contraction_rate}, {"residual", residual}, {"uniqueness_gap", gap}};
  return out;
}

inline ExperimentOutput run_simulate(const ExperimentConfig& cfg) {
  Grid g = cfg.grid();
  auto spec = cfg.problem(g);
  IMEXConfig ic = cfg.imex();
  const double H = ic.horizon;
  auto op = ic.zero_diffusion ? nullptr : assemble_operator(spec.system, g);
  auto r = run(spec, H, ic, op);
  ExperimentOutput out;
  out.table.header = {"t", "sup_norm", "boundary_value"};
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    out.table.rows.push_back({r.times[i], r.snapshots[i].sup_norm(), r.snapshots[i].boundary_value()});
  }
  out.summary = {{"blow_up", r.blow_up},   {"end", to_string(r.end)}, {"final_time", r.final_time},
                 {"steps", r.steps},       {"rejections", r.rejections}, {"boundary_value", r.boundary_value}};
  if (r.blow_up) out.summary["t_blow"] = r.t_blow;
  out.checks.push_back(bool_check("run completed", r.end == RunEnd::horizon || r.blow_up, to_string(r.end)));
  if (cfg.values["imex"]["compare_picard"].get<bool>()) {
    if (r.blow_up) throw std::invalid_argument("simulate: compare_picard needs a run without blow-up");
    // both solvers at the base resolution and once refined (dt0 / 2, J * 2)
    SemigroupAction sg(op ? op : assemble_operator(spec.system, g));
    std::vector<double> diffs;
    for (int level = 0; level < 2; ++level) {
      IMEXConfig c = ic;
      c.dt0 = ic.dt0 / (1 << level);
      c.dt_min = std::min(ic.dt_min, 0.5 * c.dt0);
      c.output_times.clear();
      auto m = run(spec, H, c, op);
      PicardConfig pc = cfg.picard();
      pc.J *= (1 << level);
      auto pr = picard_solve(spec, H, pc, sg);
      Eigen::VectorXd a = m.snapshots.back().values, b = pr.trajectory.back();
      diffs.push_back((a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300));
    }
    out.summary["picard_vs_mol"] = diffs;
    out.checks.push_back(make_check("Picard vs MOL relative difference (refined)", diffs.back(), 0.0, cfg.tol("cross_solver"), "le",
                                    "base " + format_short(diffs.front())));
  }
  return out;
}

inline ExperimentOutput run_blowup_scan(const ExperimentConfig& cfg, unsigned workers) {
  Grid g = cfg.grid();
  auto sys = cfg.system();
  IMEXConfig ic = cfg.imex();
  auto op = ic.zero_diffusion ? nullptr : assemble_operator(sys, g);
  std::vector<double> eps = doubles(cfg.values["sweep"]["eps"]);
  std::vector<double> amps = doubles(cfg.values["sweep"]["amplitude"]);
  const bool over_eps = !eps.empty();
  const std::vector<double>& axis = over_eps ? eps : amps;
  if (axis.empty()) throw std::invalid_argument("blowup-scan: sweep.eps or sweep.amplitude must be non-empty");
  std::vector<BlowupEstimate> est(axis.size());
  auto errors = parallel_for(axis.size(), workers, [&](std::size_t i) {
    json v = cfg.values;
    if (over_eps) v["forcing"]["eps"] = axis[i];
    else v["u0"]["amplitude"] = axis[i];
    auto c = ExperimentConfig::from_json(v);
    est[i] = blowup_time(c.problem(g), ic, op);
  });
  ExperimentOutput out;
  const std::string pname = over_eps ? "eps" : "amplitude";
  out.table.header = {pname, "t_blow", "uncertainty", "accepted", "end"};
  std::vector<double> xs, ts;
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (errors[i]) {
      out.failures.push_back({i, pname + "=" + format_double(axis[i]), *errors[i]});
      out.table.rows.push_back({axis[i], std::nan(""), std::nan(""), std::string("error"), std::string("")});
      continue;
    }
    out.table.rows.push_back({axis[i], est[i].t_blow, est[i].uncertainty, std::string(est[i].accepted ? "yes" : "no"),
                              to_string(est[i].end)});
    xs.push_back(axis[i]);
    ts.push_back(est[i].t_blow);
  }
  if (xs.size() >= 2) {
    // sort by the swept parameter for the monotonicity check
    std::vector<std::size_t> idx(xs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
    bool decreasing = true;
    for (std::size_t i = 1; i < idx.size(); ++i)
      if (!(ts[idx[i]] < ts[idx[i - 1]])) decreasing = false;
    out.checks.push_back(bool_check("T_blow strictly decreasing in " + pname, decreasing));
    std::vector<double> lx, ly;
    for (std::size_t i : idx) {
      lx.push_back(std::log(xs[i]));
      ly.push_back(std::log(ts[i]));
    }
    double slope = ls_slope(lx, ly);
    out.checks.push_back(make_check("log-log slope of T_blow", slope, 0.0, 0.0, "le"));
    out.summary["slope"] = slope;
    if (over_eps) {
      // (C1 eps)^(-2/(p' - lambda)) with C1 fitted at the largest eps
      const double p = cfg.p(), lambda = cfg.values["forcing"]["lambda"].get<double>();
      const double pc = conjugate_exponent(p);
      if (lambda < pc) {
        const double emax = xs[idx.back()], tmax = ts[idx.back()];
        const double C1 = std::pow(tmax, -(pc - lambda) / 2.0) / emax;
        double worst = 0.0;
        json ratios = json::array();
        for (std::size_t i : idx) {
          double ratio = ts[i] / blowup_upper_bound(xs[i], lambda, p, C1);
          worst = std::max(worst, ratio);
          ratios.push_back(ratio);
        }
        out.summary["C1"] = C1;
        out.summary["bound_ratios"] = ratios;
        out.checks.push_back(make_check("T_blow within fitted upper bound", worst, cfg.tol("bound_factor"), 0.0, "le",
                                        "max ratio T_blow / bound"));
      }
    }
    out.plot = LogLogPlot{"blow-up time", pname, "T_blow", xs, ts, std::nullopt};
    if (over_eps && cfg.values["forcing"]["lambda"].get<double>() < conjugate_exponent(cfg.p())) {
      out.plot->theory_slope = -2.0 / (conjugate_exponent(cfg.p()) - cfg.values["forcing"]["lambda"].get<double>());
    }
  }
  return out;
}

inline ExperimentOutput run_functional_scan(const ExperimentConfig& cfg, unsigned workers) {
  auto sys = cfg.system();
  const auto& fc = cfg.values["functional"];
  FamilyKind kind = parse_family_kind(fc["family"].get<std::string>());
  const double p = cfg.p();
  const int k = cfg.values["system"]["k"].get<int>();
  const int kappa = fc["kappa"].get<int>() > 0 ? fc["kappa"].get<int>() : auto_kappa(p);
  std::vector<double> Ts = doubles(cfg.values["sweep"]["T"]);
  check_scaling_grid(Ts);
  QuadratureOptions qo;
  qo.tolerance = fc["quadrature_tolerance"].get<double>();
  Forcing f = fc["forcing_in_F"].get<bool>() ? cfg.forcing() : Forcing{};
  std::vector<FunctionalValues> vals(Ts.size());
  ExponentKind ekind = TestFunctionFamily::make(kind, sys, Ts.front(), kappa, k).exponent_kind();
  auto errors = parallel_for(Ts.size(), workers, [&](std::size_t i) {
    auto fam = TestFunctionFamily::make(kind, sys, Ts[i], kappa, k);
    vals[i] = functional_integrals(fam, p, f, qo);
  });
  ExperimentOutput out;
  const std::string pname = kind == FamilyKind::critical_log ? "R" : "T";
  out.table.header = {pname, "I_delta", "I_t", "F", "level"};
  std::vector<ScalingRow> rows;
  for (std::size_t i = 0; i < Ts.size(); ++i) {
    if (errors[i]) {
      out.failures.push_back({i, pname + "=" + format_double(Ts[i]), *errors[i]});
      out.table.rows.push_back({Ts[i], std::nan(""), std::nan(""), std::nan(""), 0LL});
      continue;
    }
    out.table.rows.push_back({Ts[i], vals[i].I_delta, vals[i].I_t, vals[i].F, static_cast<long long>(vals[i].level)});
    rows.push_back({Ts[i], vals[i]});
  }
  if (rows.size() >= 2) {
    auto rep = summarize_scaling(kind, ekind, static_cast<int>(sys.dim()), p, k, kappa, rows, cfg.tol("slope"));
    const std::string what = kind == FamilyKind::critical_log ? "slope of log(I_delta/R) vs log ln sqrt R" : "I_delta slope";
    Check c = rep.exponent_kind == ExponentKind::parabolic_bounded
                  ? make_check(what + " (upper bound)", rep.fit_delta.slope, rep.theta, rep.tolerance, "le")
                  : make_check(what, rep.fit_delta.slope, rep.theta, rep.tolerance, "abs");
    c.detail = "kind " + to_string(rep.exponent_kind) + ", se " + format_short(rep.fit_delta.slope_se);
    out.checks.push_back(c);
    out.summary = {{"slope_delta", rep.fit_delta.slope}, {"slope_delta_se", rep.fit_delta.slope_se},
                   {"slope_t", rep.fit_t.slope},         {"slope_t_se", rep.fit_t.slope_se},
                   {"theta", rep.theta},                 {"exponent_kind", to_string(rep.exponent_kind)},
                   {"kappa", kappa},                     {"poor_fit", rep.poor_fit},
                   {"pass", rep.pass}};
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
      xs.push_back(kind == FamilyKind::critical_log ? 0.5 * std::log(r.T) : r.T);
      ys.push_back(kind == FamilyKind::critical_log ? r.values.I_delta / r.T : r.values.I_delta);
    }
    out.plot = LogLogPlot{"I_delta scaling (" + to_string(kind) + ")",
                          kind == FamilyKind::critical_log ? "ln sqrt R" : "T",
                          kind == FamilyKind::critical_log ? "I_delta / R" : "I_delta", xs, ys, rep.theta};
  }
  return out;
}

inline ExperimentOutput run_exponent_table(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  out.table.header = {"kind", "n", "k", "critical_exponent", "critical_exponent_decimal", "theta"};
  const auto& et = cfg.values["exponent_table"];
  std::optional<Rational> p;
  if (!et["p"].is_null()) p = et["p"].is_string() ? Rational::parse(et["p"].get<std::string>()) : Rational::from_double(et["p"].get<double>());
  for (const auto& row : et["rows"]) {
    ExponentKind kind = parse_exponent_kind(row.at("kind").get<std::string>());
    int n = row.value("n", 2), k = row.value("k", 1);
    Rational pc = critical_exponent_lower_bound(kind, n, k);
    std::string theta = p ? theoretical_exponent_exact(kind, n, *p, k).str() : std::string("");
    out.table.rows.push_back({to_string(kind), static_cast<long long>(n), static_cast<long long>(k), pc.str(), pc.to_double(), theta});
    if (row.contains("expected")) {
      Rational want = Rational::parse(row["expected"].get<std::string>());
      out.checks.push_back(bool_check("critical exponent " + to_string(kind) + " n=" + std::to_string(n) +
                                          (kind == ExponentKind::grushin ? " k=" + std::to_string(k) : "") + " = " + want.str(),
                                      pc == want, "got " + pc.str()));
    }
  }
  return out;
}

inline ExperimentOutput run_weak_residual(const ExperimentConfig& cfg) {
  const auto& wc = cfg.values["weak"];
  const int levels = wc["levels"].get<int>();
  if (levels < 2) throw std::invalid_argument("weak-residual: need at least 2 levels");
  const double T = wc["T"].get<double>();
  ExperimentOutput out;
  out.table.header = {"level", "points", "J", "h", "residual", "reaction", "initial", "forcing", "time_term", "space_term"};
  std::vector<double> lh, lr;
  for (int level = 0; level < levels; ++level) {
    int N = (wc["points0"].get<int>() - 1) * (1 << level) + 1, J = wc["J0"].get<int>() * (1 << level);
    Grid g = cfg.grid_with(N);
    auto spec = cfg.problem(g);
    SemigroupAction sg(assemble_operator(spec.system, g));
    PicardConfig pc = cfg.picard();
    pc.J = J;
    auto sol = picard_solve(spec, T, pc, sg);
    auto fam = TestFunctionFamily::make(parse_family_kind(cfg.values["functional"]["family"].get<std::string>()), spec.system, T,
                                        cfg.values["functional"]["kappa"].get<int>() > 0
                                            ? cfg.values["functional"]["kappa"].get<int>()
                                            : auto_kappa(spec.p),
                                        cfg.values["system"]["k"].get<int>());
    auto r = weak_form_residual(sol.trajectory, fam, spec);
    out.table.rows.push_back({static_cast<long long>(level), static_cast<long long>(N), static_cast<long long>(J), g.spacing(0),
                              r.residual(), r.reaction, r.initial, r.forcing, r.time_term, r.space_term});
    lh.push_back(std::log(g.spacing(0)));
    lr.push_back(std::log(r.residual()));
  }
  double order = ls_slope(lh, lr);
  out.checks.push_back(make_check("weak residual order under refinement", order, cfg.tol("weak_order"), 0.0, "ge"));
  out.summary = {{"order", order}};
  std::vector<double> hs, rs;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    hs.push_back(std::exp(lh[i]));
    rs.push_back(std::exp(lr[i]));
  }
  out.plot = LogLogPlot{"weak-form residual", "h", "residual", hs, rs, 1.0};
  return out;
}

}  // namespace detail

inline ExperimentOutput run_experiment_output(const ExperimentConfig& cfg) {
  const unsigned workers = cfg.workers();
  switch (cfg.kind) {
    case ExperimentKind::operator_check: return detail::run_operator_check(cfg);
    case ExperimentKind::kernel_check: return detail::run_kernel_check(cfg);
    case ExperimentKind::picard: return detail::run_picard(cfg);
    case ExperimentKind::simulate: return detail::run_simulate(cfg);
    case ExperimentKind::blowup_scan: return detail::run_blowup_scan(cfg, workers);
    case ExperimentKind::functional_scan: return detail::run_functional_scan(cfg, workers);
    case ExperimentKind::exponent_table: return detail::run_exponent_table(cfg);
    case ExperimentKind::weak_residual: return detail::run_weak_residual(cfg);
  }
  throw std::invalid_argument("run_experiment: bad kind");
}

// ---------------------------------------------------------------------------
// manifest

struct Manifest {
  json config;
  std::string version = kVersion;
  std::vector<std::string> files;
  double wall_seconds = 0.0;
  std::vector<Check> checks;
  std::vector<PointFailure> failures;
  std::string error;  // whole-run failure
  json summary = json::object();

  bool all_pass() const {
    if (!error.empty() || !failures.empty()) return false;
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  json to_json() const {
    json checks_j = json::array(), fail_j = json::array();
    for (const auto& c : checks) {
      checks_j.push_back({{"name", c.name},
                          {"measured", c.measured},
                          {"expected", c.expected},
                          {"tolerance", c.tolerance},
                          {"relation", c.relation},
                          {"pass", c.pass},
                          {"detail", c.detail}});
    }
    for (const auto& f : failures) fail_j.push_back({{"index", f.index}, {"parameter", f.parameter}, {"error", f.error}});
    return json{{"version", version}, {"config", config},       {"files", files},   {"wall_seconds", wall_seconds},
                {"checks", checks_j}, {"failed_points", fail_j}, {"error", error},   {"complete", error.empty() && failures.empty()},
                {"summary", summary}, {"all_pass", all_pass()}};
  }
};

/// One line per check, then failed points; "PASS"/"FAIL" lead every check line.
inline std::string emit_report(const Manifest& m) {
  std::ostringstream os;
  const std::string name = m.config.is_object() ? m.config.value("experiment", std::string("?")) : std::string("?");
  os << "blowlab " << m.version << "  " << name << "\n";
  for (const auto& c : m.checks) os << format_check(c) << "\n";
  for (const auto& f : m.failures) os << "FAIL  sweep point " << f.parameter << ": " << f.error << "\n";
  if (!m.error.empty()) os << "FAIL  run aborted: " << m.error << "\n";
  if (m.checks.empty() && m.failures.empty() && m.error.empty()) os << "PASS  completed (no checks)\n";
  os << (m.all_pass() ? "overall: PASS" : "overall: FAIL") << "\n";
  return os.str();
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << body;
  }
  std::filesystem::rename(tmp, path);
}

/// Runs the experiment and writes results.csv, report.txt, plots/*.svg and manifest.json into `out_dir`.
inline Manifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Manifest m;
  m.config = cfg.values;
  auto t0 = std::chrono::steady_clock::now();
  try {
    ExperimentOutput out = run_experiment_output(cfg);
    m.checks = std::move(out.checks);
    m.failures = std::move(out.failures);
    m.summary = std::move(out.summary);
    write_file_atomic(out_dir / "results.csv", to_csv(out.table));
    m.files.push_back("results.csv");
    if (out.plot) {
      fs::create_directories(out_dir / "plots");
      std::string name = "plots/" + to_string(cfg.kind) + ".svg";
      write_file_atomic(out_dir / name, svg_loglog(*out.plot));
      m.files.push_back(name);
    }
  } catch (const std::exception& e) {
    m.error = e.what();
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file_atomic(out_dir / "report.txt", emit_report(m));
  m.files.push_back("report.txt");
  m.files.push_back("manifest.json");
  write_file_atomic(out_dir / "manifest.json", m.to_json().dump(2) + "\n");
  return m;
}

}  // namespace blowlab
