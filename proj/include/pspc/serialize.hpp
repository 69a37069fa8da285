// Copyright 2026 The pspc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Versioned JSON for models, labels and selection plans.

#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pspc/core.hpp"
#include "pspc/data.hpp"
#include "pspc/error.hpp"
#include "pspc/labeling.hpp"
#include "pspc/models/gbdt.hpp"
#include "pspc/models/kernel_ridge.hpp"
#include "pspc/models/training.hpp"
#include "pspc/pipeline.hpp"

namespace pspc {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace detail {

template <typename F>
auto parse_json_field(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed ") + what + ": " + e.what());
  }
}

inline void check_version(const json& j, const char* what) {
  const int v = j.at("format_version").get<int>();
  if (v != kFormatVersion)
    throw ValidationError(std::string(what) + " has format_version " + std::to_string(v) + ", expected " +
                          std::to_string(kFormatVersion));
}

inline json tree_node_to_json(const models::RegressionTree& tree, std::size_t k) {
  const models::TreeNode& node = tree.nodes[k];
  json j = {{"weight", node.weight}};
  if (!node.is_leaf()) {
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["left"] = tree_node_to_json(tree, static_cast<std::size_t>(node.left));
    j["right"] = tree_node_to_json(tree, static_cast<std::size_t>(node.right));
  }
  return j;
}

// Children are allocated as adjacent slots before descending left, the same
// layout the tree builder produces.
inline void tree_node_from_json(const json& j, models::RegressionTree& tree, std::size_t k) {
  tree.nodes[k].weight = j.at("weight").get<double>();
  if (!j.contains("feature")) return;
  const int feature = j.at("feature").get<int>();
  if (feature < 0 || feature >= static_cast<int>(kPairFeatureDim)) throw ValidationError("tree feature out of range");
  const auto left = tree.nodes.size();
  tree.nodes.emplace_back();
  tree.nodes.emplace_back();
  tree.nodes[k].feature = feature;
  tree.nodes[k].threshold = j.at("threshold").get<double>();
  tree.nodes[k].left = static_cast<int>(left);
  tree.nodes[k].right = static_cast<int>(left + 1);
  tree_node_from_json(j.at("left"), tree, left);
  tree_node_from_json(j.at("right"), tree, left + 1);
}

}  // namespace detail

inline json to_json(const Normalizer& n) { return {{"min", n.min}, {"max", n.max}}; }

inline Normalizer normalizer_from_json(const json& j) {
  return detail::parse_json_field("normalizer", [&] {
    Normalizer n;
    const auto lo = j.at("min").get<std::vector<double>>(), hi = j.at("max").get<std::vector<double>>();
    if (lo.size() != kNumMetrics || hi.size() != kNumMetrics)
      throw ValidationError("normalizer needs " + std::to_string(kNumMetrics) + " min and max entries");
    std::copy(lo.begin(), lo.end(), n.min.begin());
    std::copy(hi.begin(), hi.end(), n.max.begin());
    return n;
  });
}

inline json to_json(const models::RegressionTree& tree) { return detail::tree_node_to_json(tree, 0); }

inline models::RegressionTree tree_from_json(const json& j) {
  models::RegressionTree tree;
  tree.nodes.emplace_back();
  detail::tree_node_from_json(j, tree, 0);
  return tree;
}

inline json to_json(const models::ClassifierModel& m) {
  const auto& p = m.booster.params;
  json trees = json::array();
  for (const auto& t : m.booster.trees) trees.push_back(to_json(t));
  json j = {{"format_version", kFormatVersion},
            {"kind", "gbdt_classifier"},
            {"hyperparameters", m.hyperparameters},
            {"parameters",
             {{"max_depth", p.max_depth},
              {"learning_rate", p.learning_rate},
              {"gamma_split", p.gamma_split},
              {"lambda_l2", p.lambda_l2},
              {"scale_pos_weight", p.scale_pos_weight},
              {"n_trees", p.n_trees},
              {"min_child_weight", p.min_child_weight},
              {"base_score", p.base_score},
              {"max_bins", p.max_bins},
              {"trees", trees}}},
            {"training_seed", m.training_seed.seed}};
  j["normalizer"] = m.normalizer ? to_json(*m.normalizer) : json(nullptr);
  return j;
}

inline models::ClassifierModel classifier_from_json(const json& j) {
  return detail::parse_json_field("classifier model", [&] {
    detail::check_version(j, "classifier model");
    models::ClassifierModel m;
    const auto& p = j.at("parameters");
    auto& bp = m.booster.params;
    bp.max_depth = p.at("max_depth").get<int>();
    bp.learning_rate = p.at("learning_rate").get<double>();
    bp.gamma_split = p.at("gamma_split").get<double>();
    bp.lambda_l2 = p.at("lambda_l2").get<double>();
    bp.scale_pos_weight = p.at("scale_pos_weight").get<double>();
    bp.n_trees = p.at("n_trees").get<int>();
    bp.min_child_weight = p.at("min_child_weight").get<double>();
    bp.base_score = p.at("base_score").get<double>();
    bp.max_bins = p.at("max_bins").get<int>();
    for (const auto& t : p.at("trees")) m.booster.trees.push_back(tree_from_json(t));
    m.hyperparameters = j.at("hyperparameters").get<models::HyperPoint>();
    m.training_seed = RngSeed{j.at("training_seed").get<std::uint64_t>()};
    if (!j.at("normalizer").is_null()) m.normalizer = normalizer_from_json(j.at("normalizer"));
    return m;
  });
}

inline json to_json(const models::PredictorModel& m) {
  const auto& k = m.kernel;
  json j = {{"format_version", kFormatVersion},
            {"kind", "rbf_kernel_ridge"},
            {"hyperparameters", m.hyperparameters},
            {"parameters",
             {{"gamma", k.gamma}, {"lambda", k.lambda}, {"offset", k.offset}, {"support", k.support},
              {"alpha", k.alpha}}},
            {"training_seed", m.training_seed.seed}};
  j["normalizer"] = m.normalizer ? to_json(*m.normalizer) : json(nullptr);
  return j;
}

inline models::PredictorModel predictor_from_json(const json& j) {
  return detail::parse_json_field("predictor model", [&] {
    detail::check_version(j, "predictor model");
    models::PredictorModel m;
    const auto& p = j.at("parameters");
    m.kernel.gamma = p.at("gamma").get<double>();
    m.kernel.lambda = p.at("lambda").get<double>();
    m.kernel.offset = p.at("offset").get<double>();
    m.kernel.support = p.at("support").get<std::vector<PairFeatures>>();
    m.kernel.alpha = p.at("alpha").get<std::vector<double>>();
    if (m.kernel.support.size() != m.kernel.alpha.size())
      throw ValidationError("predictor support and coefficients differ in length");
    m.hyperparameters = j.at("hyperparameters").get<models::HyperPoint>();
    m.training_seed = RngSeed{j.at("training_seed").get<std::uint64_t>()};
    if (!j.at("normalizer").is_null()) m.normalizer = normalizer_from_json(j.at("normalizer"));
    return m;
  });
}

inline json to_json(const LabelingResult& r, LabelingMethod method) {
  json labels = json::object();
  for (const auto& [pair, label] : r.labels) labels[pair.key()] = to_string(label);
  json order = json::array();
  for (const auto& pair : r.removal_order) order.push_back(pair.key());
  json skipped = json::array();
  for (const auto& pair : r.skipped) skipped.push_back(pair.key());
  json srocc = json::array();
  for (const auto& s : r.srocc_trajectory) srocc.push_back(s ? json(*s) : json(nullptr));
  return {{"ref_id", r.reference_id}, {"eta", r.eta_used},          {"method", to_string(method)},
          {"labels", labels},         {"removal_order", order},     {"plcc_trajectory", r.plcc_trajectory},
          {"srocc_trajectory", srocc}, {"skipped", skipped},        {"seed", r.seed.seed}};
}

inline json to_json(const SelectionPlan& plan) {
  json decisions = json::object();
  for (const auto& [pair, d] : plan.decisions) {
    json e = {{"kind", to_string(d.kind)}, {"score", d.defer_score}};
    if (d.p) e["p"] = *d.p;
    decisions[pair.key()] = e;
  }
  json order = json::array();
  for (const auto& pair : plan.defer_order) order.push_back(pair.key());
  return {{"format_version", kFormatVersion},
          {"ref_id", plan.reference_id},
          {"n", plan.n},
          {"decisions", decisions},
          {"defer_order", order}};
}

inline SelectionPlan plan_from_json(const json& j) {
  SelectionPlan plan = detail::parse_json_field("plan", [&] {
    SelectionPlan plan;
    plan.reference_id = j.at("ref_id").get<std::string>();
    int max_index = -1;
    for (const auto& [key, e] : j.at("decisions").items()) {
      const PairId pair = parse_pair_key(plan.reference_id, key);
      max_index = std::max(max_index, pair.j);
      PairDecision d;
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "defer") {
        d.kind = Label::kDefer;
      } else if (kind == "predict") {
        d.kind = Label::kPredict;
        d.p = e.at("p").get<double>();
      } else {
        throw ValidationError("unknown decision kind '" + kind + "'");
      }
      d.defer_score = e.value("score", 0.5);
      plan.decisions.emplace(pair, d);
    }
    plan.n = j.contains("n") ? j.at("n").get<int>() : max_index + 1;
    for (const auto& key : j.at("defer_order")) plan.defer_order.push_back(parse_pair_key(plan.reference_id, key.get<std::string>()));
    return plan;
  });
  plan.validate();
  return plan;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw RuntimeError("failed writing " + path.string());
}

// A trained bundle is a directory with classifier.json, predictor.json and
// pspc.json (eta, normalizer, provenance).
inline void save_trained(const std::filesystem::path& dir, const TrainedPSPC& model) {
  write_json_file(dir / "classifier.json", to_json(model.classifier));
  write_json_file(dir / "predictor.json", to_json(model.predictor));
  json provenance = {{"reference_ids", model.provenance.reference_ids},
                     {"seed", model.provenance.seed.seed},
                     {"method", to_string(model.provenance.method)}};
  write_json_file(dir / "pspc.json", {{"format_version", kFormatVersion},
                                      {"eta", model.eta},
                                      {"normalizer", to_json(model.normalizer)},
                                      {"provenance", provenance}});
}

inline TrainedPSPC load_trained(const std::filesystem::path& dir) {
  TrainedPSPC model;
  model.classifier = classifier_from_json(read_json_file(dir / "classifier.json"));
  model.predictor = predictor_from_json(read_json_file(dir / "predictor.json"));
  const json meta = read_json_file(dir / "pspc.json");
  detail::parse_json_field("pspc.json", [&] {
    detail::check_version(meta, "pspc.json");
    model.eta = meta.at("eta").get<double>();
    model.normalizer = normalizer_from_json(meta.at("normalizer"));
    const auto& p = meta.at("provenance");
    model.provenance.reference_ids = p.at("reference_ids").get<std::vector<std::string>>();
    model.provenance.seed = RngSeed{p.at("seed").get<std::uint64_t>()};
    model.provenance.method = parse_labeling_method(p.at("method").get<std::string>());
    return 0;
  });
  if (model.classifier.normalizer != model.normalizer || model.predictor.normalizer != model.normalizer)
    throw ValidationError("classifier, predictor and bundle normalizers differ");
  return model;
}

}  // namespace pspc
