#include "uqens/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>

#include "uqens/rng.hpp"

namespace uqens {
namespace {

namespace fs = std::filesystem;

std::string number(double v) { return format_number(v); }

std::vector<int> as_ints(std::span<const Diagnosis> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (auto d : labels) out.push_back(static_cast<int>(d));
  return out;
}

std::vector<std::string> diagnosis_names() {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < kDiagnosisCount; ++c) out.emplace_back(diagnosis_name(static_cast<Diagnosis>(c)));
  return out;
}

std::vector<Tensor> pick(std::span<const Tensor> images, std::span<const std::size_t> idx) {
  std::vector<Tensor> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(images[i]);
  return out;
}

std::string join_sizes(std::span<const std::size_t> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::uint64_t member_seed(std::uint64_t master, std::size_t fold_tag, std::size_t level, std::size_t member) {
  return derive_seed(master, {stream::member_init, fold_tag, level, member});
}

std::uint64_t level_mc_seed(std::uint64_t mc_seed, std::size_t level) { return derive_seed(mc_seed, {level}); }

// P(class 1) implied by the fused scores.
double positive_score(const EnsembleDecision& d) { return d.scores[1] / (d.scores[0] + d.scores[1]); }

CsvTable log_table() {
  CsvTable t;
  t.header = {"fold", "level", "member", "kernel_size", "epoch", "train_loss", "validation_loss", "validation_accuracy"};
  return t;
}

void append_log(CsvTable& t, const std::string& fold, const std::string& level, std::size_t member,
                std::size_t kernel, const std::vector<EpochLog>& log) {
  for (const auto& e : log) {
    t.rows.push_back({fold, level, std::to_string(member), std::to_string(kernel), std::to_string(e.epoch),
                      number(e.train_loss), format_optional(e.validation_loss), format_optional(e.validation_accuracy)});
  }
}

std::string epochs_preamble(const TreeSpec& tree, std::span<const std::size_t> epochs) {
  std::string s = "# epochs";
  for (std::size_t l = 0; l < tree.levels.size(); ++l) s += " " + tree.levels[l].name + "=" + std::to_string(epochs[l]);
  return s + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct TrainJob {
  std::size_t fold_tag, level, member;
};

// Trains every (fold, level, member) job; fold_tag 0 means the full dataset.
std::vector<TrainedMember> train_jobs(const RunConfig& config, const PreparedDataset& data, const TreeSpec& tree,
                                      const std::vector<std::vector<std::size_t>>& train_sets,
                                      const std::vector<TrainJob>& jobs) {
  const auto bank = build_bank(config.network, config.kernel_sizes);
  std::vector<TrainedMember> results(jobs.size());
  parallel_for(jobs.size(), config.threads, [&](std::size_t j) {
    const TrainJob& job = jobs[j];
    const auto& pool = train_sets[job.fold_tag];
    std::vector<Diagnosis> pool_labels;
    for (auto i : pool) pool_labels.push_back(data.labels[i]);
    const LevelSubset subset = level_subset(tree, job.level, pool_labels);
    std::vector<std::size_t> global;
    for (auto i : subset.indices) global.push_back(pool[i]);
    const auto images = pick(data.images, global);
    TrainOptions options = config.train;
    options.epochs = config.epochs[job.level];
    results[j] = train_member(bank[job.member], images, subset.targets, options,
                              member_seed(*config.seed, job.fold_tag, job.level, job.member));
  });
  return results;
}

}  // namespace

PreparedDataset prepare_dataset(const RunConfig& config) {
  const std::vector<LabeledImage> raw = config.manifest
                                            ? load_dataset(*config.manifest)
                                            : synth_generate(config.synth.n_per_class, config.synth.side, config.synth.seed);
  PreparedDataset out;
  out.images.reserve(raw.size());
  for (const auto& r : raw) {
    const std::size_t side = config.network.input_side;
    out.images.push_back(config.standardize_first ? resize(standardize(r.pixels), side) : preprocess(r.pixels, side));
    out.labels.push_back(r.label);
    out.sources.push_back(r.source_id);
  }
  return out;
}

LevelSubset level_subset(const TreeSpec& tree, std::size_t level, std::span<const Diagnosis> labels) {
  LevelSubset s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!tree.reaches(level, labels[i])) continue;
    s.indices.push_back(i);
    s.targets.push_back(tree.binary_target(level, labels[i]));
  }
  return s;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

void save_ensemble(const fs::path& manifest_path, const EnsembleBundle& bundle,
                   const std::vector<std::vector<fs::path>>& checkpoint_paths) {
  if (checkpoint_paths.size() != bundle.tree.levels.size()) {
    throw std::invalid_argument("one checkpoint list per tree level expected");
  }
  std::ostringstream o;
  o << "[ensemble]\nlevels = " << bundle.tree.levels.size()
    << "\nfinal_leaf = " << diagnosis_name(bundle.tree.final_leaf) << "\nmc_samples = " << bundle.mc_samples
    << "\nmc_seed = " << bundle.mc_seed
    << "\nuncertainty = " << (bundle.uncertainty == UncertaintyForm::relative ? "relative" : "absolute")
    << "\nstandardize_first = " << (bundle.standardize_first ? "true" : "false") << "\nsensitivities = ";
  for (std::size_t i = 0; i < bundle.sensitivities.size(); ++i) o << (i ? "," : "") << number(bundle.sensitivities[i]);
  o << "\n";
  const fs::path base = manifest_path.parent_path();
  for (std::size_t l = 0; l < bundle.tree.levels.size(); ++l) {
    std::vector<std::size_t> kernels;
    for (const auto& c : bundle.levels[l]) kernels.push_back(c.config.kernel_size);
    o << "\n[level" << l << "]\nname = " << bundle.tree.levels[l].name
      << "\nnegative_leaf = " << diagnosis_name(bundle.tree.levels[l].negative_leaf)
      << "\nkernel_sizes = " << join_sizes(kernels) << "\ncheckpoints = ";
    for (std::size_t k = 0; k < checkpoint_paths[l].size(); ++k) {
      o << (k ? "," : "") << fs::relative(checkpoint_paths[l][k], base.empty() ? fs::path(".") : base).generic_string();
    }
    o << "\n";
  }
  write_text(manifest_path, o.str());
}

EnsembleBundle load_ensemble(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open ensemble manifest " + manifest_path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string origin = manifest_path.string();
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& e : parse_key_values(buf.str(), origin)) sections[e.section][e.key] = e.value;

  auto get = [&](const std::string& section, const std::string& key) -> const std::string& {
    const auto s = sections.find(section);
    if (s == sections.end() || !s->second.count(key)) {
      throw ConfigError(origin + ": missing " + section + "." + key);
    }
    return s->second.at(key);
  };

  EnsembleBundle b;
  const std::size_t n_levels = parse_size_list(get("ensemble", "levels")).at(0);
  b.tree.final_leaf = parse_diagnosis(get("ensemble", "final_leaf"));
  b.mc_samples = parse_size_list(get("ensemble", "mc_samples")).at(0);
  b.mc_seed = parse_u64(get("ensemble", "mc_seed"));
  const std::string& form = get("ensemble", "uncertainty");
  if (form != "relative" && form != "absolute") throw ConfigError(origin + ": bad uncertainty form '" + form + "'");
  b.uncertainty = form == "relative" ? UncertaintyForm::relative : UncertaintyForm::absolute;
  const std::string& order = get("ensemble", "standardize_first");
  if (order != "true" && order != "false") throw ConfigError(origin + ": bad standardize_first '" + order + "'");
  b.standardize_first = order == "true";
  {
    std::stringstream s(get("ensemble", "sensitivities"));
    std::string item;
    while (std::getline(s, item, ',')) b.sensitivities.push_back(parse_number(item));
  }
  const fs::path base = manifest_path.parent_path();
  for (std::size_t l = 0; l < n_levels; ++l) {
    const std::string sec = "level" + std::to_string(l);
    b.tree.levels.push_back({get(sec, "name"), parse_diagnosis(get(sec, "negative_leaf"))});
    const auto kernels = parse_size_list(get(sec, "kernel_sizes"));
    std::vector<Checkpoint> members;
    std::stringstream s(get(sec, "checkpoints"));
    std::string item;
    while (std::getline(s, item, ',')) members.push_back(load_checkpoint(base / item));
    if (members.size() != kernels.size()) throw ConfigError(origin + ": " + sec + " lists mismatched members");
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (members[k].config.kernel_size != kernels[k]) {
        throw ConfigError(origin + ": " + sec + " checkpoint " + std::to_string(k) + " has kernel size " +
                          std::to_string(members[k].config.kernel_size) + ", manifest says " +
                          std::to_string(kernels[k]));
      }
    }
    b.levels.push_back(std::move(members));
  }
  b.tree.validate();
  return b;
}

TrainOutcome run_train(const RunConfig& config) {
  config.validate();
  const PreparedDataset data = prepare_dataset(config);
  const TreeSpec tree = TreeSpec::three_level();
  for (std::size_t l = 0; l < tree.levels.size(); ++l) {
    const auto subset = level_subset(tree, l, data.labels);
    bool has[2] = {false, false};
    for (int t : subset.targets) has[t] = true;
    if (!has[0] || !has[1]) throw std::invalid_argument("tree level " + tree.levels[l].name + " lacks one of its classes");
  }

  std::vector<std::size_t> all(data.images.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<TrainJob> jobs;
  for (std::size_t l = 0; l < tree.levels.size(); ++l)
    for (std::size_t k = 0; k < config.kernel_sizes.size(); ++k) jobs.push_back({0, l, k});
  const auto trained = train_jobs(config, data, tree, {all}, jobs);

  fs::create_directories(config.out / "checkpoints");
  TrainOutcome outcome;
  EnsembleBundle bundle;
  bundle.tree = tree;
  bundle.mc_samples = config.network.mc_samples;
  bundle.mc_seed = derive_seed(*config.seed, {stream::mc_passes});
  bundle.uncertainty = config.uncertainty;
  bundle.sensitivities = config.sensitivities;
  bundle.standardize_first = config.standardize_first;
  bundle.levels.resize(tree.levels.size());
  std::vector<std::vector<fs::path>> paths(tree.levels.size());
  CsvTable log = log_table();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& job = jobs[j];
    const auto& ckpt = trained[j].checkpoint;
    const fs::path p = config.out / "checkpoints" /
                       (tree.levels[job.level].name + "_k" + std::to_string(ckpt.config.kernel_size) + ".ckpt");
    save_checkpoint(p, ckpt);
    paths[job.level].push_back(p);
    outcome.checkpoints.push_back(p);
    bundle.levels[job.level].push_back(ckpt);
    append_log(log, "all", tree.levels[job.level].name, job.member, ckpt.config.kernel_size, trained[j].log);
  }
  outcome.ensemble_manifest = config.out / "ensemble.cfg";
  save_ensemble(outcome.ensemble_manifest, bundle, paths);
  outcome.log = config.out / "training_log.csv";
  write_text(outcome.log, epochs_preamble(tree, config.epochs) + format_csv(log));
  write_text(config.out / "run.cfg", run_config_to_text(config));
  return outcome;
}

EvaluateOutcome run_evaluate(const RunConfig& config) {
  config.validate();
  const PreparedDataset data = prepare_dataset(config);
  const TreeSpec tree = TreeSpec::three_level();
  const std::size_t n_levels = tree.levels.size(), n_members = config.kernel_sizes.size();
  const auto labels = as_ints(data.labels);
  const auto names = diagnosis_names();
  const FoldPlan plan =
      stratified_folds(labels, config.n_folds, derive_seed(*config.seed, {stream::fold_shuffle}), names);

  // train_sets[0] is unused; fold f uses tag f + 1.
  std::vector<std::vector<std::size_t>> train_sets(config.n_folds + 1);
  for (std::size_t f = 0; f < config.n_folds; ++f) {
    std::vector<bool> in_test(labels.size(), false);
    for (auto i : plan.folds[f]) in_test[i] = true;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!in_test[i]) train_sets[f + 1].push_back(i);
  }
  std::vector<TrainJob> jobs;
  for (std::size_t f = 0; f < config.n_folds; ++f)
    for (std::size_t l = 0; l < n_levels; ++l)
      for (std::size_t k = 0; k < n_members; ++k) jobs.push_back({f + 1, l, k});
  const auto trained = train_jobs(config, data, tree, train_sets, jobs);

  // decisions[fold][level][test position]
  const std::uint64_t mc_seed = derive_seed(*config.seed, {stream::mc_passes});
  std::vector<std::vector<std::vector<EnsembleDecision>>> decisions(config.n_folds,
                                                                    std::vector<std::vector<EnsembleDecision>>(n_levels));
  parallel_for(config.n_folds * n_levels, config.threads, [&](std::size_t j) {
    const std::size_t f = j / n_levels, l = j % n_levels;
    std::vector<Checkpoint> members;
    for (std::size_t k = 0; k < n_members; ++k) members.push_back(trained[(f * n_levels + l) * n_members + k].checkpoint);
    const EnsembleClassifier clf(std::move(members), config.network.mc_samples, level_mc_seed(mc_seed, l),
                                 config.uncertainty);
    decisions[f][l] = clf.decide(pick(data.images, plan.folds[f]));
  });

  fs::create_directories(config.out / "roc");
  EvaluateOutcome outcome;
  outcome.reports.resize(n_levels + 1);
  for (std::size_t l = 0; l < n_levels; ++l) outcome.reports[l].classifier_id = tree.levels[l].name;
  outcome.reports[n_levels].classifier_id = "multiclass";

  CsvTable predictions;
  predictions.header = {"fold", "index", "source", "truth", "predicted"};
  for (const auto& lvl : tree.levels) predictions.header.push_back("u_" + lvl.name);
  predictions.header.push_back("combined_uncertainty");
  CsvTable confusion;
  confusion.header = {"fold", "truth"};
  for (const auto& n : names) confusion.header.push_back(n);

  for (std::size_t f = 0; f < config.n_folds; ++f) {
    const auto& test = plan.folds[f];
    for (std::size_t l = 0; l < n_levels; ++l) {
      std::vector<int> truth, predicted;
      std::vector<ScoredLabel> scored;
      double u_sum = 0.0;
      for (std::size_t p = 0; p < test.size(); ++p) {
        const Diagnosis d = data.labels[test[p]];
        if (!tree.reaches(l, d)) continue;
        const auto& dec = decisions[f][l][p];
        truth.push_back(tree.binary_target(l, d));
        predicted.push_back(static_cast<int>(dec.label));
        scored.push_back({positive_score(dec), truth.back()});
        u_sum += dec.uncertainty[dec.label];
      }
      MetricReport r = binary_metrics(confusion_counts(truth, predicted));
      const RocCurve roc = roc_curve_auc(scored);
      r.roc_auc = roc.area;
      CsvTable roc_table;
      roc_table.header = {"fpr", "tpr", "threshold"};
      for (const auto& pt : roc.points) roc_table.rows.push_back({number(pt.fpr), number(pt.tpr), number(pt.threshold)});
      const fs::path roc_path = config.out / "roc" / (tree.levels[l].name + "_fold" + std::to_string(f + 1) + ".csv");
      write_csv(roc_path, roc_table);
      outcome.files.push_back(roc_path);
      outcome.reports[l].folds.push_back(r);
      outcome.reports[l].fold_uncertainty.push_back(u_sum / static_cast<double>(truth.size()));
    }

    std::vector<int> truth, predicted;
    double u_sum = 0.0;
    for (std::size_t p = 0; p < test.size(); ++p) {
      const TreeRoute route = route_decisions(
          tree, [&](std::size_t l) { return decisions[f][l][p]; }, config.sensitivities);
      truth.push_back(labels[test[p]]);
      predicted.push_back(static_cast<int>(route.label));
      u_sum += route.combined_uncertainty;
      std::vector<std::string> row{std::to_string(f + 1), std::to_string(test[p]), data.sources[test[p]],
                                   names[static_cast<std::size_t>(truth.back())],
                                   std::string(diagnosis_name(route.label))};
      for (std::size_t l = 0; l < n_levels; ++l)
        row.push_back(l < route.steps.size() ? number(route.steps[l].uncertainty) : "");
      row.push_back(number(route.combined_uncertainty));
      predictions.rows.push_back(std::move(row));
    }
    const ConfusionMatrix m = confusion_matrix(truth, predicted, kDiagnosisCount);
    for (std::size_t t = 0; t < kDiagnosisCount; ++t) {
      std::vector<std::string> row{std::to_string(f + 1), names[t]};
      for (auto v : m[t]) row.push_back(std::to_string(v));
      confusion.rows.push_back(std::move(row));
    }
    outcome.multiclass_confusion.push_back(m);
    outcome.reports[n_levels].folds.push_back(multiclass_metrics(m));
    outcome.reports[n_levels].fold_uncertainty.push_back(u_sum / static_cast<double>(test.size()));
  }

  CsvTable metrics;
  metrics.header = {"classifier", "fold"};
  for (const auto& c : metric_columns()) metrics.header.push_back(c);
  for (const auto& c : {"ROC_AUC", "Kappa", "Uncertainty"}) metrics.header.emplace_back(c);
  using Field = std::optional<double> MetricReport::*;
  const Field fields[] = {&MetricReport::acc, &MetricReport::sens, &MetricReport::spec, &MetricReport::prec,
                          &MetricReport::auc_balanced, &MetricReport::f1, &MetricReport::roc_auc,
                          &MetricReport::kappa};
  std::vector<ClassifierScores> ku;
  for (const auto& rep : outcome.reports) {
    ClassifierScores scores{rep.classifier_id, {}};
    for (std::size_t f = 0; f < rep.folds.size(); ++f) {
      std::vector<std::string> row{rep.classifier_id, std::to_string(f + 1)};
      for (auto field : fields) row.push_back(format_optional(rep.folds[f].*field));
      row.push_back(number(rep.fold_uncertainty[f]));
      metrics.rows.push_back(std::move(row));
      scores.folds.push_back({f + 1, *rep.folds[f].kappa, rep.fold_uncertainty[f]});
    }
    std::vector<std::string> agg{rep.classifier_id, "mean ± std"};
    for (std::size_t i = 0; i < std::size(fields); ++i) {
      std::vector<std::optional<double>> values;
      for (const auto& r : rep.folds) values.push_back(r.*fields[i]);
      const auto s = summarize(values);
      agg.push_back(s ? format_mean_std(*s, i < metric_columns().size()) : "");
    }
    std::vector<std::optional<double>> us(rep.fold_uncertainty.begin(), rep.fold_uncertainty.end());
    agg.push_back(format_mean_std(*summarize(us), false));
    metrics.rows.push_back(std::move(agg));
    ku.push_back(std::move(scores));
  }
  outcome.kappa_uncertainty = kappa_uncertainty_table(ku);
  CsvTable ku_table;
  ku_table.header = {"classifier_id", "fold", "kappa", "uncertainty", "is_centroid"};
  for (const auto& p : outcome.kappa_uncertainty) {
    ku_table.rows.push_back({p.classifier_id, p.is_centroid ? "" : std::to_string(p.fold), number(p.kappa),
                             number(p.uncertainty), p.is_centroid ? "true" : "false"});
  }

  CsvTable log = log_table();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    append_log(log, std::to_string(jobs[j].fold_tag), tree.levels[jobs[j].level].name, jobs[j].member,
               trained[j].checkpoint.config.kernel_size, trained[j].log);
  }

  const std::pair<const char*, const CsvTable*> tables[] = {{"metrics.csv", &metrics},
                                                             {"kappa_uncertainty.csv", &ku_table},
                                                             {"confusion_multiclass.csv", &confusion},
                                                             {"cv_predictions.csv", &predictions}};
  for (const auto& [name, table] : tables) {
    write_csv(config.out / name, *table);
    outcome.files.push_back(config.out / name);
  }
  write_text(config.out / "cv_training_log.csv", epochs_preamble(tree, config.epochs) + format_csv(log));
  outcome.files.push_back(config.out / "cv_training_log.csv");
  return outcome;
}

fs::path run_predict(const RunConfig& config, const std::vector<fs::path>& images) {
  const EnsembleBundle bundle = load_ensemble(config.ensemble_path());
  const std::size_t side = bundle.levels.at(0).at(0).config.input_side;
  std::vector<std::unique_ptr<EnsembleClassifier>> owned;
  std::vector<const LevelClassifier*> classifiers;
  for (std::size_t l = 0; l < bundle.levels.size(); ++l) {
    owned.push_back(std::make_unique<EnsembleClassifier>(bundle.levels[l], bundle.mc_samples,
                                                         level_mc_seed(bundle.mc_seed, l), bundle.uncertainty));
    classifiers.push_back(owned.back().get());
  }
  const DecisionTree tree(bundle.tree, classifiers, bundle.sensitivities);

  std::vector<Tensor> ok;
  std::vector<std::string> errors(images.size());
  std::vector<std::size_t> ok_index;
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      const Tensor pixels = read_pgm(images[i]);
      ok.push_back(bundle.standardize_first ? resize(standardize(pixels), side) : preprocess(pixels, side));
      ok_index.push_back(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  const auto routes = tree.multiclass_predict(ok);

  CsvTable t;
  t.header = {"path", "label", "combined_uncertainty"};
  for (const auto& lvl : bundle.tree.levels) {
    for (const char* suffix : {"_decision", "_uncertainty", "_E0", "_E1"}) t.header.push_back(lvl.name + suffix);
  }
  t.header.push_back("error");
  std::vector<const TreeRoute*> by_input(images.size(), nullptr);
  for (std::size_t j = 0; j < ok_index.size(); ++j) by_input[ok_index[j]] = &routes[j];
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<std::string> row{images[i].string()};
    const TreeRoute* r = by_input[i];
    row.push_back(r ? std::string(diagnosis_name(r->label)) : "");
    row.push_back(r ? number(r->combined_uncertainty) : "");
    for (std::size_t l = 0; l < bundle.tree.levels.size(); ++l) {
      if (r && l < r->steps.size()) {
        const auto& s = r->steps[l];
        row.insert(row.end(), {std::to_string(s.decision.label), number(s.uncertainty), number(s.decision.scores[0]),
                               number(s.decision.scores[1])});
      } else {
        row.insert(row.end(), 4, "");
      }
    }
    row.push_back(errors[i]);
    t.rows.push_back(std::move(row));
  }
  fs::create_directories(config.out);
  const fs::path path = config.out / "predictions.csv";
  write_csv(path, t);
  return path;
}

fs::path run_synth(const RunConfig& config) {
  if (!config.seed) throw ConfigError("seed is mandatory (set run.seed or pass --seed)");
  if (config.synth.n_per_class == 0 || config.synth.side < 16) {
    throw ConfigError("synthetic data needs synth_per_class >= 1 and synth_side >= 16");
  }
  const auto images = synth_generate(config.synth.n_per_class, config.synth.side, config.synth.seed);
  write_dataset(config.out, images);
  return config.out / "manifest.csv";
}

MeanStd parse_mean_std(const std::string& cell, bool percent) {
  const std::string sep = " ± ";
  const auto at = cell.find(sep);
  if (at == std::string::npos) throw std::invalid_argument("not a mean ± std cell: '" + cell + "'");
  MeanStd m;
  const double scale = percent ? 100.0 : 1.0;
  m.mean = parse_number(cell.substr(0, at)) / scale;
  m.std = parse_number(cell.substr(at + sep.size())) / scale;
  return m;
}

std::string format_mean_std(const MeanStd& value, bool percent) {
  char buf[96];
  if (percent) std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * value.mean, 100.0 * value.std);
  else std::snprintf(buf, sizeof buf, "%.4f ± %.4f", value.mean, value.std);
  return buf;
}

}  // namespace uqens
