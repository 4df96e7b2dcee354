#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "kcforge/afm.hpp"
#include "kcforge/error.hpp"
#include "kcforge/rng.hpp"
#include "kcforge/types.hpp"

namespace kcforge {

// Seeded generator of AFM-shaped data with known ground-truth parameters.
// Drives the fit oracles and the model-discrimination checks.
struct SyntheticConfig {
  int num_students = 50;
  int num_items = 25;
  int num_kcs = 5;
  int steps_per_student = 20;
  std::uint64_t seed = 0;
  double theta_sd = 1.0;
  double beta_sd = 0.5;
  double gamma_min = 0.05;
  double gamma_max = 0.30;
};

struct SyntheticData {
  std::vector<StepRecord> steps;
  KcModel model;  // item -> generating KC, one label per item
  std::map<std::string, double> theta_by_student;
  std::map<std::string, double> beta_by_kc;
  std::map<std::string, double> gamma_by_kc;
};

namespace detail {

inline std::string padded_id(const char* prefix, int index, int width) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%s%0*d", prefix, width, index);
  return buffer;
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticConfig& config) {
  if (config.num_students < 1 || config.num_items < 1 || config.num_kcs < 1 ||
      config.steps_per_student < 1) {
    throw ValidationError("generate_synthetic: all sizes must be >= 1");
  }
  if (config.num_kcs > config.num_items) {
    throw ValidationError(
        "generate_synthetic: need at least one item per KC");
  }
  SeededRng rng(config.seed);
  SyntheticData data;

  std::vector<std::string> kc_labels;
  for (int k = 0; k < config.num_kcs; ++k) {
    kc_labels.push_back(detail::padded_id("kc", k, 2));
  }
  KcModel::Mapping mapping;
  std::vector<std::string> item_ids;
  std::vector<int> item_kc;
  for (int i = 0; i < config.num_items; ++i) {
    const std::string item = detail::padded_id("i", i, 3);
    item_ids.push_back(item);
    item_kc.push_back(i % config.num_kcs);
    mapping[item] = {kc_labels[static_cast<std::size_t>(i % config.num_kcs)]};
  }
  data.model = KcModel("synthetic", std::move(mapping));

  std::vector<std::string> student_ids;
  std::vector<double> theta;
  for (int s = 0; s < config.num_students; ++s) {
    const std::string student = detail::padded_id("s", s, 3);
    student_ids.push_back(student);
    theta.push_back(config.theta_sd * rng.normal());
    data.theta_by_student[student] = theta.back();
  }
  std::vector<double> beta;
  std::vector<double> gamma;
  for (int k = 0; k < config.num_kcs; ++k) {
    beta.push_back(config.beta_sd * rng.normal());
    gamma.push_back(config.gamma_min +
                    (config.gamma_max - config.gamma_min) * rng.unit_real());
    data.beta_by_kc[kc_labels[static_cast<std::size_t>(k)]] = beta.back();
    data.gamma_by_kc[kc_labels[static_cast<std::size_t>(k)]] = gamma.back();
  }

  for (int s = 0; s < config.num_students; ++s) {
    std::vector<int> opportunity(static_cast<std::size_t>(config.num_kcs), 0);
    for (int t = 0; t < config.steps_per_student; ++t) {
      const auto item = static_cast<std::size_t>(
          rng.bounded(static_cast<std::uint64_t>(config.num_items)));
      const int kc = item_kc[item];
      const double z = theta[static_cast<std::size_t>(s)] +
                       beta[static_cast<std::size_t>(kc)] +
                       gamma[static_cast<std::size_t>(kc)] *
                           opportunity[static_cast<std::size_t>(kc)];
      StepRecord step;
      step.student_id = student_ids[static_cast<std::size_t>(s)];
      step.item_id = item_ids[item];
      step.order = t;
      step.outcome = rng.unit_real() < sigmoid(z) ? 1 : 0;
      data.steps.push_back(std::move(step));
      ++opportunity[static_cast<std::size_t>(kc)];
    }
  }
  return data;
}

// Ground-truth parameters arranged to match a design's index maps.
inline AfmParams true_params_for(const SyntheticData& data,
                                 const Design& design) {
  AfmParams params;
  params.theta.assign(design.num_students(), 0.0);
  params.beta.assign(design.num_kcs(), 0.0);
  params.gamma.assign(design.num_kcs(), 0.0);
  for (const auto& [student, value] : data.theta_by_student) {
    const auto it = design.student_index.find(student);
    if (it != design.student_index.end()) {
      params.theta[static_cast<std::size_t>(it->second)] = value;
    }
  }
  for (const auto& [kc, value] : data.beta_by_kc) {
    const auto it = design.kc_index.find(kc);
    if (it != design.kc_index.end()) {
      params.beta[static_cast<std::size_t>(it->second)] = value;
      params.gamma[static_cast<std::size_t>(it->second)] =
          data.gamma_by_kc.at(kc);
    }
  }
  return params;
}

}  // namespace kcforge
