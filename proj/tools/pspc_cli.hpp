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

// Command-line front end. Exit codes: 0 success, 1 validation error (bad
// input or usage), 2 runtime failure.

#pragma once

#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pspc/pspc.hpp"
#include "pspc/service_http.hpp"

namespace pspc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  double eta = 0.99;
  std::string method = "kld";
  std::string out;
  std::string format = "csv";
};

inline json provenance_json(const OutputHeader& h) {
  return {{"tool", "pspc"}, {"version", std::string(kToolVersion)}, {"seed", h.seed.seed}, {"config", h.config_hash}};
}

// Writes to --out, or stdout when it is empty or "-".
inline void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  auto f = detail::open_output(out);
  f << text;
  if (!f) throw RuntimeError("failed writing " + out);
}

inline std::vector<double> parse_etas(const std::vector<double>& given) {
  if (given.empty()) return default_eta_sweep();
  return given;
}

inline models::HyperGrid quick_classifier_grid() {
  models::HyperGrid g = models::default_classifier_grid();
  g.axes = {{"max_depth", {2, 3}}, {"learning_rate", {0.1}}, {"gamma_split", {0.1}}, {"lambda_l2", {1}}};
  return g;
}

inline models::HyperGrid quick_predictor_grid() {
  models::HyperGrid g = models::default_predictor_grid();
  g.axes = {{"gamma_rbf", {0.5, 1}}, {"lambda_ridge", {1e-2, 1e-1}}};
  return g;
}

struct TrainFlags {
  bool quick = false;
  std::string pos_weight = "literal";
  bool no_cross_fit = false;
};

inline PipelineConfig pipeline_config(const Globals& g, const TrainFlags& t) {
  PipelineConfig cfg;
  cfg.eta = g.eta;
  cfg.method = parse_labeling_method(g.method);
  cfg.seed = RngSeed{g.seed};
  cfg.classifier.pos_weight = models::parse_pos_weight_mode(t.pos_weight);
  cfg.cross_fitted_labeling = !t.no_cross_fit;
  if (t.quick) {
    cfg.classifier_grid = quick_classifier_grid();
    cfg.predictor_grid = quick_predictor_grid();
  }
  return cfg;
}

inline void add_train_flags(CLI::App* cmd, TrainFlags& t) {
  cmd->add_flag("--quick", t.quick, "Reduced hyperparameter grids");
  cmd->add_option("--pos-weight", t.pos_weight, "scale_pos_weight form: literal (defer/predict), inverted, unit")
      ->check(CLI::IsMember({"literal", "inverted", "unit"}));
  cmd->add_flag("--no-cross-fit", t.no_cross_fit, "Label with in-sample predictor outputs");
}

inline std::map<std::string, PreferenceMatrix> load_matrices(const std::string& pcm, const std::string& counts,
                                                             std::map<std::string, CountMatrix>* raw = nullptr) {
  if (!pcm.empty() == !counts.empty()) throw ValidationError("give exactly one of --pcm or --counts");
  if (!pcm.empty()) return load_preference_csv(pcm);
  std::map<std::string, PreferenceMatrix> out;
  auto c = load_counts_csv(counts);
  for (const auto& [ref, m] : c) out.emplace(ref, build_pcm(m));
  if (raw) *raw = std::move(c);
  return out;
}

inline std::string curves_csv(const std::map<std::string, std::vector<CurvePoint>>& curves, const std::string& method,
                              const OutputHeader& h) {
  std::ostringstream s;
  s << h.line() << "\nref_id,method,removed,plcc,srocc\n";
  for (const auto& [ref, curve] : curves)
    for (const auto& p : curve) {
      s << ref << ',' << method << ',' << p.removed << ',';
      if (p.plcc) s << detail::format_double(*p.plcc);
      s << ',';
      if (p.srocc) s << detail::format_double(*p.srocc);
      s << '\n';
    }
  return s.str();
}

inline std::string results_csv(const std::vector<AblationRow>& rows, const OutputHeader& h) {
  std::ostringstream s;
  s << h.line() << "\nmode,eta,fold,plcc,srocc,defer_fraction,defer_trials,seed\n";
  for (const auto& r : rows) {
    s << to_string(r.mode) << ',' << (r.eta ? detail::format_double(*r.eta) : "") << ','
      << (r.fold == kAllFolds ? std::string("all") : std::to_string(r.fold)) << ',';
    s << (std::isnan(r.plcc) ? "" : detail::format_double(r.plcc)) << ','
      << (std::isnan(r.srocc) ? "" : detail::format_double(r.srocc)) << ',' << detail::format_double(r.defer_fraction)
      << ',' << r.defer_trials << ',' << r.seed.seed << '\n';
  }
  return s.str();
}

inline json results_json(const std::vector<AblationRow>& rows, const OutputHeader& h) {
  json out = {{"provenance", provenance_json(h)}, {"rows", json::array()}};
  for (const auto& r : rows)
    out["rows"].push_back({{"mode", to_string(r.mode)},
                           {"eta", r.eta ? json(*r.eta) : json(nullptr)},
                           {"fold", r.fold == kAllFolds ? json("all") : json(r.fold)},
                           {"plcc", std::isnan(r.plcc) ? json(nullptr) : json(r.plcc)},
                           {"srocc", std::isnan(r.srocc) ? json(nullptr) : json(r.srocc)},
                           {"defer_fraction", r.defer_fraction},
                           {"defer_trials", r.defer_trials},
                           {"seed", r.seed.seed}});
  return out;
}

inline json scores_json(const std::map<std::string, ScoreEstimate>& scores, const OutputHeader& h) {
  json out = {{"provenance", provenance_json(h)}, {"scores", json::object()}};
  for (const auto& [ref, est] : scores)
    out["scores"][ref] = {{"s_hat", est.s_hat},
                          {"pi", est.pi},
                          {"sigma_hat", est.sigma_hat},
                          {"converged", est.converged},
                          {"iterations", est.iterations}};
  return out;
}

inline std::atomic<httplib::Server*>& active_server() {
  static std::atomic<httplib::Server*> server{nullptr};
  return server;
}

inline int cli_dispatch(int argc, char** argv) {
  CLI::App app{"Predictive sampling for pairwise-comparison quality studies", "pspc"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (echoed into every output)");
  app.add_option("--eta", g.eta, "Target PLCC for labeling, in [0.97, 1]");
  app.add_option("--method", g.method, "Labeling method")->check(CLI::IsMember({"random", "entropy", "kld"}));
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));

  // label
  auto* label = app.add_subcommand("label", "Ground-truth defer/predict labels or labeling curves");
  std::string label_pcm, label_counts, label_ref, label_model, label_features;
  bool label_curve = false;
  int label_repeats = 50;
  label->add_option("--pcm", label_pcm, "preferences.csv (ref_id,i,j,p_ij)");
  label->add_option("--counts", label_counts, "counts.csv (ref_id,i,j,c_ij,c_ji)");
  label->add_option("--ref", label_ref, "Only this reference");
  label->add_option("--model", label_model, "Trained bundle; removal uses its predictor instead of 0.5");
  label->add_option("--features", label_features, "features.csv, required with --model");
  label->add_flag("--curve", label_curve, "Write PLCC/SROCC after every removal (no stopping rule)");
  label->add_option("--repeats", label_repeats, "Runs averaged for random curves")->check(CLI::PositiveNumber);

  // train
  auto* train = app.add_subcommand("train", "Train predictor and classifier on a dataset directory");
  std::string train_dataset;
  TrainFlags train_flags;
  train->add_option("--dataset", train_dataset, "Directory with features.csv and counts.csv")->required();
  add_train_flags(train, train_flags);

  // select
  auto* select = app.add_subcommand("select", "Split a new study's pairs into defer and predict");
  std::string select_model, select_features, select_ref;
  int select_n = 0;
  select->add_option("--model", select_model, "Trained bundle directory")->required();
  select->add_option("--features", select_features, "features.csv of the new study")->required();
  select->add_option("--ref", select_ref, "Reference id (default: the only one in the file)");
  select->add_option("--n", select_n, "Stimulus count (default: from the features)");

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "Bradley-Terry scores from comparisons");
  std::string agg_pcm, agg_counts, agg_trials, agg_plan, agg_exponent = "probability";
  aggregate->add_option("--pcm", agg_pcm, "preferences.csv");
  aggregate->add_option("--counts", agg_counts, "counts.csv");
  aggregate->add_option("--trials", agg_trials, "trials.jsonl of a study (with --plan)");
  aggregate->add_option("--plan", agg_plan, "plan.json of a study (with --trials)");
  aggregate->add_option("--exponent", agg_exponent, "Likelihood exponents")
      ->check(CLI::IsMember({"probability", "counts"}));

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated ablation with trial budgets");
  std::string eval_dataset;
  std::vector<std::string> eval_modes;
  std::vector<double> eval_etas;
  int eval_folds = 5, eval_repeats = 50;
  std::optional<int> eval_fold_limit;
  TrainFlags eval_flags;
  evaluate->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  evaluate->add_option("--ablation", eval_modes, "Modes: full, classifier_only, predictor_only, random_classifier")
      ->delimiter(',');
  evaluate->add_option("--etas", eval_etas, "Eta sweep (default 0.97,0.98,0.985,0.99,0.995)")->delimiter(',');
  evaluate->add_option("--folds", eval_folds, "Folds over references");
  evaluate->add_option("--fold-limit", eval_fold_limit, "Evaluate only the first folds");
  evaluate->add_option("--repeats", eval_repeats, "Random-classifier repetitions")->check(CLI::PositiveNumber);
  add_train_flags(evaluate, eval_flags);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset directory");
  int sim_refs = 5, sim_stimuli = 16, sim_trials = 15;
  double sim_noise = 0.5;
  simulate->add_option("--refs", sim_refs, "References")->check(CLI::PositiveNumber);
  simulate->add_option("--stimuli", sim_stimuli, "Stimuli per reference");
  simulate->add_option("--noise", sim_noise, "Metric noise level");
  simulate->add_option("--trials", sim_trials, "Trials per pair")->check(CLI::PositiveNumber);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP study service");
  std::string serve_studies, serve_host = "127.0.0.1", serve_static, serve_stimuli;
  int serve_port = 8080, serve_target = 15;
  serve->add_option("--studies", serve_studies, "Directory of study directories (each with plan.json)")->required();
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port");
  serve->add_option("--static", serve_static, "Web UI bundle directory");
  serve->add_option("--stimuli", serve_stimuli, "Stimulus image directory");
  serve->add_option("--target", serve_target, "Target trials per defer pair")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const OutputHeader header{RngSeed{g.seed}, config_hash(app.config_to_str(true, false))};
    const bool as_json = g.format == "json";

    if (*label) {
      std::map<std::string, CountMatrix> raw;
      auto pcms = load_matrices(label_pcm, label_counts, &raw);
      if (!label_ref.empty()) {
        if (!pcms.count(label_ref)) throw ValidationError("no reference '" + label_ref + "'");
        pcms = {{label_ref, pcms.at(label_ref)}};
      }
      std::optional<TrainedPSPC> model;
      FeatureTable features;
      if (!label_model.empty()) {
        if (label_features.empty()) throw ValidationError("--model needs --features");
        model = load_trained(label_model);
        features = apply_normalizer(load_features_csv(label_features), model->normalizer);
      }
      const auto removal_for = [&](const std::string& ref, const PreferenceMatrix& pcm) -> FillPolicy {
        if (!model) return ConstantFill{0.5};
        PredictionFill fill;
        for (const PairId& pair : all_pairs(ref, static_cast<int>(pcm.size())))
          fill.predictions[pair] = models::predict_features(model->predictor, pair_features(features, pair));
        return fill;
      };
      const LabelingMethod method = parse_labeling_method(g.method);
      if (label_curve) {
        std::map<std::string, std::vector<CurvePoint>> curves;
        for (const auto& [ref, pcm] : pcms)
          curves[ref] = labeling_curve(pcm, method, removal_for(ref, pcm), label_repeats,
                                       derive_seed(RngSeed{g.seed}, hash_string(ref)), ref);
        if (as_json) {
          json out = {{"provenance", provenance_json(header)}, {"method", g.method}, {"curves", json::object()}};
          for (const auto& [ref, curve] : curves)
            for (const auto& p : curve)
              out["curves"][ref].push_back({{"removed", p.removed},
                                            {"plcc", p.plcc ? json(*p.plcc) : json(nullptr)},
                                            {"srocc", p.srocc ? json(*p.srocc) : json(nullptr)}});
          emit(g.out.empty() ? "curves.json" : g.out, out.dump(2) + "\n");
        } else {
          emit(g.out.empty() ? "curves.csv" : g.out, curves_csv(curves, g.method, header));
        }
        return 0;
      }
      json results = json::array();
      for (const auto& [ref, pcm] : pcms) {
        LabelingConfig cfg;
        cfg.eta = g.eta;
        cfg.method = method;
        cfg.removal = removal_for(ref, pcm);
        cfg.seed = derive_seed(RngSeed{g.seed}, hash_string(ref));
        json j = to_json(label_pairs(pcm, cfg, ref), method);
        j["provenance"] = provenance_json(header);
        results.push_back(j);
      }
      emit(g.out.empty() ? "labels.json" : g.out, (results.size() == 1 ? results[0] : results).dump(2) + "\n");
      return 0;
    }

    if (*train) {
      const Dataset data = load_dataset(train_dataset);
      const TrainedPSPC model = train_pspc(data, pipeline_config(g, train_flags));
      const fs::path dir = g.out.empty() ? fs::path("model") : fs::path(g.out);
      save_trained(dir, model);
      json labels = json::array();
      for (const auto& r : model.labeling) labels.push_back(to_json(r, model.provenance.method));
      write_json_file(dir / "labels.json", labels);
      json report = {{"provenance", provenance_json(header)},
                     {"classifier",
                      {{"chosen", model.classifier.hyperparameters},
                       {"internal_auc", model.classifier_report.internal_auc.value_or(NAN)},
                       {"defer_before_oversampling", model.classifier_report.before_oversampling.defer},
                       {"predict_before_oversampling", model.classifier_report.before_oversampling.predict},
                       {"defer_after_oversampling", model.classifier_report.after_oversampling.defer},
                       {"predict_after_oversampling", model.classifier_report.after_oversampling.predict}}},
                     {"predictor",
                      {{"chosen", model.predictor.hyperparameters},
                       {"internal_mse", model.predictor_report.internal_mse.value_or(NAN)}}}};
      write_json_file(dir / "report.json", report);
      std::cerr << "model written to " << dir.string() << "\n";
      return 0;
    }

    if (*select) {
      const TrainedPSPC model = load_trained(select_model);
      const FeatureTable features = load_features_csv(select_features);
      std::string ref = select_ref;
      if (ref.empty()) {
        const auto refs = features.reference_ids();
        if (refs.size() != 1) throw ValidationError("features cover several references; pass --ref");
        ref = refs.front();
      }
      const int n = select_n > 0 ? select_n : features.stimulus_count(ref);
      json plan = to_json(select_pairs(model, features, ref, n));
      plan["provenance"] = provenance_json(header);
      emit(g.out.empty() ? "plan.json" : g.out, plan.dump(2) + "\n");
      return 0;
    }

    if (*aggregate) {
      std::map<std::string, ScoreEstimate> scores;
      if (!agg_trials.empty() || !agg_plan.empty()) {
        if (agg_trials.empty() || agg_plan.empty()) throw ValidationError("--trials and --plan go together");
        const SelectionPlan plan = plan_from_json(read_json_file(agg_plan));
        std::vector<TrialRecord> trials = load_trials_jsonl(agg_trials);
        for (auto& t : trials)
          if (t.pair.reference_id.empty()) t.pair = PairId(plan.reference_id, t.pair.i, t.pair.j);
        scores[plan.reference_id] = score_study(plan, trials).scores;
      } else {
        std::map<std::string, CountMatrix> raw;
        const auto pcms = load_matrices(agg_pcm, agg_counts, &raw);
        const Exponent mode = agg_exponent == "counts" ? Exponent::kCounts : Exponent::kProbability;
        if (mode == Exponent::kCounts && raw.empty()) throw ValidationError("--exponent counts needs --counts");
        for (const auto& [ref, pcm] : pcms) {
          if (!pcm.complete())
            throw ValidationError("reference '" + ref + "' has pairs without data; fill them before aggregating");
          scores[ref] = mode == Exponent::kCounts ? fit_bt(exponent_weights(pcm, raw.at(ref), mode)) : fit_bt(pcm);
          if (!scores[ref].converged) throw RuntimeError("BT fit for '" + ref + "' did not converge");
        }
      }
      if (as_json) {
        emit(g.out, scores_json(scores, header).dump(2) + "\n");
      } else {
        std::ostringstream s;
        write_scores_csv(s, scores, header);
        emit(g.out, s.str());
      }
      return 0;
    }

    if (*evaluate) {
      const Dataset data = load_dataset(eval_dataset);
      AblationOptions opt;
      opt.modes.clear();
      for (const auto& m : eval_modes.empty() ? std::vector<std::string>{"full"} : eval_modes)
        opt.modes.push_back(parse_ablation_mode(m));
      opt.etas = parse_etas(eval_etas);
      opt.folds = eval_folds;
      opt.fold_limit = eval_fold_limit;
      opt.random_repeats = eval_repeats;
      opt.pipeline = pipeline_config(g, eval_flags);
      opt.seed = RngSeed{g.seed};
      const auto rows = run_ablation(data, opt);
      emit(g.out.empty() ? (as_json ? "results.json" : "results.csv") : g.out,
           as_json ? results_json(rows, header).dump(2) + "\n" : results_csv(rows, header));
      return 0;
    }

    if (*simulate) {
      const SyntheticStudy study = make_synthetic_study(sim_refs, sim_stimuli, sim_noise, RngSeed{g.seed}, sim_trials);
      const fs::path dir = g.out.empty() ? fs::path("synth") : fs::path(g.out);
      write_dataset(dir, study.dataset, header);
      auto out = detail::open_output(dir / "true_scores.csv");
      out << header.line() << "\nref_id,stimulus_id,score\n";
      for (const auto& [ref, scores] : study.true_scores)
        for (std::size_t i = 0; i < scores.size(); ++i)
          out << ref << ',' << stimulus_key({ref, static_cast<int>(i)}) << ',' << detail::format_double(scores[i])
              << '\n';
      return 0;
    }

    if (*serve) {
      StudyOptions sopt;
      sopt.target_trials_per_pair = serve_target;
      sopt.seed = RngSeed{g.seed};
      StudyRegistry registry(sopt);
      registry.load_directory(serve_studies);
      httplib::Server server;
      install_routes(server, registry, {serve_static, serve_stimuli});
      active_server() = &server;
      std::signal(SIGINT, [](int) {
        if (auto* s = active_server().load()) s->stop();
      });
      std::cerr << "serving " << registry.ids().size() << " studies on " << serve_host << ":" << serve_port << "\n";
      if (!server.listen(serve_host, serve_port)) throw RuntimeError("cannot listen on port " + std::to_string(serve_port));
      active_server() = nullptr;
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace pspc::cli
