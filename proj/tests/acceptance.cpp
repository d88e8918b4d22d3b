// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <iostream>

#include "blowlab/experiments.hpp"

#ifndef BLOWLAB_CONFIG_DIR
#define BLOWLAB_CONFIG_DIR "configs"
#endif

using namespace blowlab;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << title;
  if (!o.detail.empty()) std::cout << ": " << o.detail;
  std::cout << std::endl;
  if (!o.pass) ++failures;
}

ExperimentConfig config(const std::string& name) {
  return ExperimentConfig::load("", std::string(BLOWLAB_CONFIG_DIR) + "/" + name + ".json");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs a config and folds its checks into the outcome; check lines go to the detail.
void run_into(Outcome& o, const std::string& name, const std::string& label = {}) {
  ExperimentOutput out;
  try {
    out = run_experiment_output(config(name));
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + name + " aborted: " + e.what();
    return;
  }
  for (const auto& f : out.failures) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + name + " point " + f.parameter + " failed: " + f.error;
  }
  for (const auto& c : out.checks) {
    if (!c.pass) o.pass = false;
    std::string line = format_check(c);
    o.detail += (o.detail.empty() ? "" : "; ") + (label.empty() ? std::string() : label + " ") + line.substr(6);
    if (!c.pass) o.detail += " [FAIL]";
  }
}

template <class F>
Outcome guarded(F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

int main() {
  report(1, "exact critical exponents", guarded([] {
           Outcome o;
           run_into(o, "exponent_table");
           return o;
         }));

  report(2, "I_delta scaling slopes on exact kinds", guarded([] {
           Outcome o;
           auto t0 = std::chrono::steady_clock::now();
           run_into(o, "functional_constant", "constant n=2 p=1.5");
           run_into(o, "functional_grushin", "grushin k=1 p=1.3");
           run_into(o, "functional_engel", "engel n=3 p=1.2");
           double s = seconds_since(t0);
           if (s >= 120.0) o.pass = false;
           o.detail += "; runtime " + format_short(s) + " s (limit 120)";
           return o;
         }));

  report(3, "trig-bounded slope under the parabolic bound", guarded([] {
           Outcome o;
           run_into(o, "functional_trig");
           return o;
         }));

  report(4, "critical-log slope against ln sqrt R", guarded([] {
           Outcome o;
           run_into(o, "functional_critical");
           return o;
         }));

  report(5, "Picard contraction, residual and uniqueness", guarded([] {
           Outcome o;
           auto t0 = std::chrono::steady_clock::now();
           auto cfg = config("picard");
           if (cfg.grid().points(0) != 201 || cfg.picard().J != 64 || cfg.system().dim() != 1)
             throw std::invalid_argument("picard config must be 1-D with N=201, J=64");
           run_into(o, "picard");
           double s = seconds_since(t0);
           if (s >= 60.0) o.pass = false;
           o.detail += "; runtime " + format_short(s) + " s (limit 60)";
           return o;
         }));

  report(6, "semigroup defect, kernel mass and Gaussian peak", guarded([] {
           Outcome o;
           run_into(o, "kernel_euclidean", "euclidean 1-D");
           run_into(o, "kernel_constant", "constant 2-D");
           run_into(o, "kernel_engel", "engel 3-D");
           return o;
         }));

  report(7, "Picard vs method of lines", guarded([] {
           Outcome o;
           run_into(o, "simulate_compare");
           return o;
         }));

  report(8, "zero-diffusion blow-up time vs the ODE", guarded([] {
           Outcome o;
           auto cfg = config("blowup_ode");
           if (!cfg.imex().zero_diffusion) throw std::invalid_argument("blowup_ode must set imex.zero_diffusion");
           const double p = cfg.p();
           for (double a : cfg.values["sweep"]["amplitude"].get<std::vector<double>>()) {
             json v = cfg.values;
             v["u0"]["amplitude"] = a;
             auto c = ExperimentConfig::from_json(v);
             auto est = blowup_time(c.problem(c.grid()), c.imex());
             const double exact = std::pow(a, 1.0 - p) / (p - 1.0);
             const double rel = std::abs(est.t_blow - exact) / exact;
             if (!(rel <= 0.02)) o.pass = false;
             o.detail += (o.detail.empty() ? "" : "; ") + std::string("u0=") + format_short(a) + " T_blow " +
                         format_short(est.t_blow) + " vs " + format_short(exact) + " (rel " + format_short(rel) + ")";
           }
           return o;
         }));

  report(9, "blow-up time monotone and under the fitted bound", guarded([] {
           Outcome o;
           run_into(o, "blowup_power_tail");
           return o;
         }));

  report(10, "weak residual order under refinement", guarded([] {
           Outcome o;
           run_into(o, "weak_residual");
           return o;
         }));

  report(11, "discrete operator convergence order", guarded([] {
           Outcome o;
           run_into(o, "operator_euclidean");
           run_into(o, "operator_trig");
           run_into(o, "operator_engel");
           return o;
         }));

  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failures ? 1 : 0;
}
