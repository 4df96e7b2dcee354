#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "kcforge/error.hpp"
#include "kcforge/ingestion.hpp"
#include "kcforge/types.hpp"

namespace kcforge {

// One step in design form. `opportunities[i]` is the number of earlier steps
// by the same student that involved `kcs[i]`, counted strictly before this
// step; per student and KC the counts run 0, 1, 2, ... without gaps.
struct DesignRow {
  int student = 0;
  std::vector<int> kcs;            // sorted, non-empty
  std::vector<int> opportunities;  // parallel to kcs
  int outcome = 0;
};

struct Design {
  std::vector<DesignRow> rows;
  std::vector<std::string> student_ids;  // index -> id
  std::vector<std::string> kc_labels;    // index -> label
  std::map<std::string, int> student_index;
  std::map<std::string, int> kc_index;

  std::size_t num_students() const { return student_ids.size(); }
  std::size_t num_kcs() const { return kc_labels.size(); }
};

// theta: per-student proficiency; beta: per-KC easiness; gamma: per-KC
// learning rate per opportunity. All in log-odds units; gamma >= 0 after
// fitting.
struct AfmParams {
  std::vector<double> theta;
  std::vector<double> beta;
  std::vector<double> gamma;
};

struct FitConfig {
  double l2_theta = 1.0;
  double l2_beta = 1e-3;
  double l2_gamma = 1e-3;
  double tolerance = 1e-6;  // projected-gradient infinity norm at convergence
  int max_iterations = 20'000;
  std::uint64_t seed = 0;  // consumed only by synthetic-data utilities
};

inline void validate(const FitConfig& config) {
  if (config.l2_theta < 0 || config.l2_beta < 0 || config.l2_gamma < 0) {
    throw ValidationError("FitConfig: l2 penalties must be >= 0");
  }
  if (config.tolerance <= 0) {
    throw ValidationError("FitConfig: tolerance must be positive");
  }
  if (config.max_iterations < 1) {
    throw ValidationError("FitConfig: max_iterations must be >= 1");
  }
}

// Builds design rows in per-student chronological order from raw steps.
// Every step's item must be mapped by the model; opportunity counts are
// derived here and never taken from the input.
inline Design build_design(const std::vector<StepRecord>& steps,
                           const KcModel& model) {
  Design design;
  std::vector<StepRecord> sorted = steps;
  std::sort(sorted.begin(), sorted.end(),
            [](const StepRecord& a, const StepRecord& b) {
              if (a.student_id != b.student_id) {
                return a.student_id < b.student_id;
              }
              return a.order < b.order;
            });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].student_id == sorted[i - 1].student_id &&
        sorted[i].order == sorted[i - 1].order) {
      throw ValidationError("duplicate (student_id, order) = ('" +
                            sorted[i].student_id + "', " +
                            std::to_string(sorted[i].order) + ")");
    }
  }

  for (const auto& step : sorted) {
    if (!model.contains_item(step.item_id)) {
      throw ValidationError("item '" + step.item_id +
                            "' is not mapped in KC model '" + model.name() +
                            "'");
    }
    if (design.student_index.emplace(step.student_id, 0).second) {
      design.student_ids.push_back(step.student_id);
    }
    for (const auto& label : model.labels_for(step.item_id)) {
      if (design.kc_index.emplace(label, 0).second) {
        design.kc_labels.push_back(label);
      }
    }
  }
  std::sort(design.student_ids.begin(), design.student_ids.end());
  std::sort(design.kc_labels.begin(), design.kc_labels.end());
  for (std::size_t i = 0; i < design.student_ids.size(); ++i) {
    design.student_index[design.student_ids[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < design.kc_labels.size(); ++i) {
    design.kc_index[design.kc_labels[i]] = static_cast<int>(i);
  }

  std::vector<int> counts(design.kc_labels.size(), 0);
  std::string current_student;
  for (const auto& step : sorted) {
    if (step.student_id != current_student) {
      std::fill(counts.begin(), counts.end(), 0);
      current_student = step.student_id;
    }
    DesignRow row;
    row.student = design.student_index.at(step.student_id);
    for (const auto& label : model.labels_for(step.item_id)) {
      row.kcs.push_back(design.kc_index.at(label));
    }
    std::sort(row.kcs.begin(), row.kcs.end());
    for (const int kc : row.kcs) {
      row.opportunities.push_back(counts[static_cast<std::size_t>(kc)]);
    }
    row.outcome = step.outcome;
    for (const int kc : row.kcs) {
      ++counts[static_cast<std::size_t>(kc)];
    }
    design.rows.push_back(std::move(row));
  }
  return design;
}

// Numerically safe logistic; evaluated piecewise on the sign of z so the
// exponential never overflows.
inline double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double linear_term(const AfmParams& params, const DesignRow& row) {
  if (row.student < 0 ||
      static_cast<std::size_t>(row.student) >= params.theta.size()) {
    throw ContractError("design row references student index " +
                        std::to_string(row.student) + " out of range");
  }
  if (row.kcs.empty() || row.kcs.size() != row.opportunities.size()) {
    throw ContractError("design row has inconsistent KC/opportunity lists");
  }
  double z = params.theta[static_cast<std::size_t>(row.student)];
  for (std::size_t i = 0; i < row.kcs.size(); ++i) {
    const int kc = row.kcs[i];
    if (kc < 0 || static_cast<std::size_t>(kc) >= params.beta.size() ||
        params.beta.size() != params.gamma.size()) {
      throw ContractError("design row references KC index " +
                          std::to_string(kc) + " out of range");
    }
    z += params.beta[static_cast<std::size_t>(kc)] +
         params.gamma[static_cast<std::size_t>(kc)] *
             static_cast<double>(row.opportunities[i]);
  }
  return z;
}

// P(correct) = logistic(theta[s] + sum_k beta[k] + gamma[k]*opportunity[k]),
// clamped into the open interval (0, 1).
inline double predict(const AfmParams& params, const DesignRow& row) {
  const double p = sigmoid(linear_term(params, row));
  constexpr double kMin = std::numeric_limits<double>::min();
  const double k_max = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(p, kMin, k_max);
}

namespace detail {

// Per-row Bernoulli NLL in log-sum-exp form, piecewise on the sign of z:
//   z >= 0: (1-y) z + log1p(e^{-z})
//   z <  0:    -y z + log1p(e^{ z})
// Evaluated in extended precision: near the optimum the line search needs to
// certify objective decreases far below double's rounding noise on a sum of
// thousands of O(1) terms.
inline long double bernoulli_nll(long double z, int outcome) {
  if (z >= 0.0L) {
    return (1 - outcome) * z + std::log1p(std::exp(-z));
  }
  return -outcome * z + std::log1p(std::exp(z));
}

inline long double penalty(const AfmParams& params, const FitConfig& config) {
  long double sum = 0.0L;
  for (const double t : params.theta) {
    sum += static_cast<long double>(config.l2_theta) * t * t;
  }
  for (const double b : params.beta) {
    sum += static_cast<long double>(config.l2_beta) * b * b;
  }
  for (const double g : params.gamma) {
    sum += static_cast<long double>(config.l2_gamma) * g * g;
  }
  return 0.5L * sum;
}

inline long double nll_extended(const AfmParams& params,
                                const std::vector<DesignRow>& rows,
                                const FitConfig& config) {
  long double nll = 0.0L;
  for (const auto& row : rows) {
    nll += bernoulli_nll(linear_term(params, row), row.outcome);
  }
  return nll + penalty(params, config);
}

}  // namespace detail

// Penalized negative log likelihood:
//   sum_rows -[y log p + (1-y) log(1-p)] + 1/2 sum l2 * param^2
inline double negative_log_likelihood(const AfmParams& params,
                                      const std::vector<DesignRow>& rows,
                                      const FitConfig& config) {
  return static_cast<double>(detail::nll_extended(params, rows, config));
}

// Exact analytic gradient of the penalized NLL, same shape as the params.
// d/dtheta[s] = sum_{rows of s} (p - y) + l2_theta theta[s]
// d/dbeta[k]  = sum_{rows with k} (p - y) + l2_beta beta[k]
// d/dgamma[k] = sum_{rows with k} (p - y) opportunity + l2_gamma gamma[k]
inline AfmParams gradient(const AfmParams& params,
                          const std::vector<DesignRow>& rows,
                          const FitConfig& config) {
  AfmParams grad;
  grad.theta.assign(params.theta.size(), 0.0);
  grad.beta.assign(params.beta.size(), 0.0);
  grad.gamma.assign(params.gamma.size(), 0.0);
  for (const auto& row : rows) {
    const double residual = sigmoid(linear_term(params, row)) -
                            static_cast<double>(row.outcome);
    grad.theta[static_cast<std::size_t>(row.student)] += residual;
    for (std::size_t i = 0; i < row.kcs.size(); ++i) {
      const auto kc = static_cast<std::size_t>(row.kcs[i]);
      grad.beta[kc] += residual;
      grad.gamma[kc] += residual * static_cast<double>(row.opportunities[i]);
    }
  }
  for (std::size_t s = 0; s < params.theta.size(); ++s) {
    grad.theta[s] += config.l2_theta * params.theta[s];
  }
  for (std::size_t k = 0; k < params.beta.size(); ++k) {
    grad.beta[k] += config.l2_beta * params.beta[k];
    grad.gamma[k] += config.l2_gamma * params.gamma[k];
  }
  return grad;
}

struct FitIteration {
  int iteration = 0;
  double objective = 0.0;
  double projected_gradient_norm = 0.0;
  double step_size = 0.0;
};

using FitObserver = std::function<void(const FitIteration&)>;

namespace detail {

// Flat packing [theta | beta | gamma] used by the optimizer.
inline std::vector<double> pack(const AfmParams& p) {
  std::vector<double> x;
  x.reserve(p.theta.size() + p.beta.size() + p.gamma.size());
  x.insert(x.end(), p.theta.begin(), p.theta.end());
  x.insert(x.end(), p.beta.begin(), p.beta.end());
  x.insert(x.end(), p.gamma.begin(), p.gamma.end());
  return x;
}

inline AfmParams unpack(const std::vector<double>& x, std::size_t students,
                        std::size_t kcs) {
  AfmParams p;
  p.theta.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(students));
  p.beta.assign(x.begin() + static_cast<std::ptrdiff_t>(students),
                x.begin() + static_cast<std::ptrdiff_t>(students + kcs));
  p.gamma.assign(x.begin() + static_cast<std::ptrdiff_t>(students + kcs),
                 x.end());
  return p;
}

}  // namespace detail

// Fits the AFM by projected gradient descent: spectral (Barzilai-Borwein)
// step proposal, Armijo backtracking so the objective never increases, and
// gamma projected onto [0, inf) every step. The objective is convex on the
// feasible set, so the zero start needs no randomization and the result is
// deterministic for fixed inputs.
//
// Convergence = projected-gradient infinity norm <= tolerance, where a gamma
// coordinate sitting at 0 with a gradient pushing it negative counts as
// converged.
inline AfmParams fit(const Design& design, const FitConfig& config,
                     const FitObserver& observer = nullptr) {
  validate(config);
  if (design.rows.empty()) {
    throw ValidationError("fit: design has no rows");
  }
  const std::size_t students = design.num_students();
  const std::size_t kcs = design.num_kcs();
  {
    std::vector<bool> student_seen(students, false);
    std::vector<bool> kc_seen(kcs, false);
    for (const auto& row : design.rows) {
      if (row.student < 0 ||
          static_cast<std::size_t>(row.student) >= students) {
        throw ContractError("fit: student index out of range");
      }
      student_seen[static_cast<std::size_t>(row.student)] = true;
      for (const int kc : row.kcs) {
        if (kc < 0 || static_cast<std::size_t>(kc) >= kcs) {
          throw ContractError("fit: KC index out of range");
        }
        kc_seen[static_cast<std::size_t>(kc)] = true;
      }
    }
    for (std::size_t s = 0; s < students; ++s) {
      if (!student_seen[s]) {
        throw ValidationError("fit: student '" + design.student_ids[s] +
                              "' appears in no row");
      }
    }
    for (std::size_t k = 0; k < kcs; ++k) {
      if (!kc_seen[k]) {
        throw ValidationError("fit: KC '" + design.kc_labels[k] +
                              "' appears in no row");
      }
    }
  }

  const std::size_t gamma_offset = students + kcs;
  const auto project = [&](std::vector<double>& x) {
    for (std::size_t i = gamma_offset; i < x.size(); ++i) {
      x[i] = std::max(x[i], 0.0);
    }
  };
  const auto objective_of = [&](const std::vector<double>& x) {
    return detail::nll_extended(detail::unpack(x, students, kcs), design.rows,
                                config);
  };
  const auto gradient_of = [&](const std::vector<double>& x) {
    return detail::pack(
        gradient(detail::unpack(x, students, kcs), design.rows, config));
  };
  const auto projected_gradient_norm = [&](const std::vector<double>& x,
                                           const std::vector<double>& g) {
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double component = g[i];
      if (i >= gamma_offset && x[i] == 0.0) {
        component = std::min(component, 0.0);
      }
      norm = std::max(norm, std::abs(component));
    }
    return norm;
  };

  std::vector<double> x(students + 2 * kcs, 0.0);
  long double objective = objective_of(x);
  std::vector<double> prev_x;
  std::vector<double> prev_g;
  double step = 1.0;
  constexpr long double kArmijo = 1e-4L;

  for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
    const std::vector<double> g = gradient_of(x);
    const double pg_norm = projected_gradient_norm(x, g);
    if (observer) {
      observer({iteration, static_cast<double>(objective), pg_norm, step});
    }
    if (pg_norm <= config.tolerance) {
      return detail::unpack(x, students, kcs);
    }

    if (!prev_x.empty()) {
      // BB1 spectral step from the last accepted move.
      double dx_dx = 0.0;
      double dx_dg = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - prev_x[i];
        const double dg = g[i] - prev_g[i];
        dx_dx += dx * dx;
        dx_dg += dx * dg;
      }
      if (dx_dg > 0.0 && dx_dx > 0.0) {
        step = std::clamp(dx_dx / dx_dg, 1e-12, 1e12);
      } else {
        step = std::min(step * 2.0, 1e12);
      }
    }

    prev_x = x;
    prev_g = g;

    bool accepted = false;
    double t = step;
    for (int backtrack = 0; backtrack < 80; ++backtrack) {
      std::vector<double> candidate(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        candidate[i] = x[i] - t * g[i];
      }
      project(candidate);
      long double move_sq = 0.0L;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const long double d = static_cast<long double>(candidate[i]) - x[i];
        move_sq += d * d;
      }
      if (move_sq == 0.0L) {
        break;  // projection pinned every coordinate; cannot move
      }
      const long double candidate_objective = objective_of(candidate);
      // strict decrease required: near the noise floor the Armijo margin
      // rounds to zero and would otherwise accept sideways moves
      if (candidate_objective < objective &&
          candidate_objective <= objective - (kArmijo / t) * move_sq) {
        x = std::move(candidate);
        objective = candidate_objective;
        step = t;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      throw ConvergenceError(
          "fit: line search stalled at projected-gradient norm " +
              std::to_string(pg_norm),
          pg_norm);
    }
  }

  const double final_norm = projected_gradient_norm(x, gradient_of(x));
  if (final_norm <= config.tolerance) {
    return detail::unpack(x, students, kcs);
  }
  throw ConvergenceError("fit: no convergence after " +
                             std::to_string(config.max_iterations) +
                             " iterations; projected-gradient norm " +
                             std::to_string(final_norm),
                         final_norm);
}

namespace detail {

inline std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

}  // namespace detail

// Two TSV blocks: `student\ttheta` rows, then `kc\tbeta\tgamma` rows, both
// sorted by id. Values carry full round-trip precision.
inline void write_afm_params(const AfmParams& params, const Design& design,
                             std::ostream& sink) {
  if (params.theta.size() != design.num_students() ||
      params.beta.size() != design.num_kcs() ||
      params.gamma.size() != design.num_kcs()) {
    throw ContractError("write_afm_params: params do not match the design");
  }
  sink << "student\ttheta\n";
  for (std::size_t s = 0; s < design.student_ids.size(); ++s) {
    sink << design.student_ids[s] << '\t'
         << detail::format_double(params.theta[s]) << '\n';
  }
  sink << "kc\tbeta\tgamma\n";
  for (std::size_t k = 0; k < design.kc_labels.size(); ++k) {
    sink << design.kc_labels[k] << '\t'
         << detail::format_double(params.beta[k]) << '\t'
         << detail::format_double(params.gamma[k]) << '\n';
  }
  if (!sink) {
    throw IoError("write failure while serializing AFM parameters");
  }
}

struct NamedAfmParams {
  std::map<std::string, double> theta_by_student;
  std::map<std::string, std::pair<double, double>> beta_gamma_by_kc;
};

inline NamedAfmParams read_afm_params(std::istream& source) {
  std::string line;
  if (!std::getline(source, line) ||
      detail::chomp_cr(line) != "student\ttheta") {
    throw ParseError("params file must start with header 'student\\ttheta'");
  }
  NamedAfmParams out;
  bool in_kc_block = false;
  std::size_t line_no = 1;
  while (std::getline(source, line)) {
    ++line_no;
    line = detail::chomp_cr(line);
    if (line.empty()) {
      continue;
    }
    if (line == "kc\tbeta\tgamma") {
      in_kc_block = true;
      continue;
    }
    const auto fields = detail::split_tabs(line);
    try {
      if (!in_kc_block) {
        if (fields.size() != 2) {
          throw ParseError("");
        }
        out.theta_by_student[fields[0]] = std::stod(fields[1]);
      } else {
        if (fields.size() != 3) {
          throw ParseError("");
        }
        out.beta_gamma_by_kc[fields[0]] = {std::stod(fields[1]),
                                           std::stod(fields[2])};
      }
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": malformed params row '" + line + "'");
    }
  }
  if (out.beta_gamma_by_kc.empty()) {
    throw ValidationError("params file has no KC block");
  }
  return out;
}

}  // namespace kcforge
