#include "ugnn/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "ugnn/bilevel.hpp"
#include "ugnn/config.hpp"
#include "ugnn/conformance.hpp"
#include "ugnn/descent.hpp"
#include "ugnn/energy.hpp"
#include "ugnn/kge.hpp"
#include "ugnn/lp.hpp"

namespace ugnn {
namespace {

namespace fs = std::filesystem;

std::string path_join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

std::string csv_of_matrix(const Matrix& M) {
  std::string out;
  for (std::size_t i = 0; i < M.rows; ++i) {
    for (std::size_t j = 0; j < M.cols; ++j) {
      if (j) out += ',';
      out += format_real(M.at(i, j));
    }
    out += '\n';
  }
  return out;
}

void apply_thread_env() {
  const char* env = std::getenv("UNROLLGNN_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 0)
    throw std::invalid_argument(
        "UNROLLGNN_THREADS must be a nonnegative integer (0 = automatic)");
#ifdef _OPENMP
  if (v > 0) omp_set_num_threads(static_cast<int>(v));
#endif
}

std::size_t checked_count(std::int64_t v, const std::string& key) {
  if (v < 0)
    throw std::invalid_argument("config: " + key + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

/// Shared descent-variant knobs. The prox only reaches variants that apply
/// one. Backtracking is a config key except where the caller forbids it.
DescentAlgorithm algo_from_config(ConfigReader& r, ProxOperator prox,
                                  bool allow_backtrack) {
  const std::string name = r.choice_or(
      "algo", "gd",
      {"gd", "prox_gd", "degree_gd", "momentum", "adagrad", "rmsprop", "adam"});
  const double gamma = r.positive_real("gamma");
  const double beta = r.real_or("beta", 0.9);
  const double beta1 = r.real_or("beta1", 0.9);
  const double beta2 = r.real_or("beta2", 0.999);
  const double eps = r.real_or("eps", 1e-8);

  DescentAlgorithm algo;
  if (name == "gd") algo = make_gd(gamma);
  else if (name == "prox_gd") algo = make_prox_gd(gamma, prox);
  else if (name == "degree_gd") algo = make_degree_gd(gamma);
  else if (name == "momentum") algo = make_momentum(gamma, beta, prox);
  else if (name == "adagrad") algo = make_adagrad(gamma, eps);
  else if (name == "rmsprop") algo = make_rmsprop(gamma, beta, eps);
  else algo = make_adam(gamma, beta1, beta2, eps);
  if (allow_backtrack) algo.backtracking = r.flag_or("backtrack", false);
  return algo;
}

ProxOperator prox_from_config(ConfigReader& r) {
  const std::string name =
      r.choice_or("prox", "identity", {"identity", "nonneg", "unitnorm"});
  if (name == "nonneg") return ProxOperator::nonneg();
  if (name == "unitnorm") return ProxOperator::unit_norm();
  return ProxOperator::identity();
}

/// Labels with everything outside the train split hidden.
LabelSet train_restricted(const LabelSet& labels,
                          const std::vector<Split>& splits) {
  LabelSet out = labels;
  for (std::size_t v = 0; v < out.size(); ++v) {
    if (splits[v] != Split::Train) {
      out.class_of[v] = -1;
      out.observed[v] = 0;
    }
  }
  return out;
}

double split_accuracy(const std::vector<long>& predicted,
                      const LabelSet& labels, const Dataset& ds) {
  std::size_t total = 0;
  std::size_t correct = 0;
  // score the test split when one exists and is populated, otherwise every
  // labeled node
  bool use_test = false;
  if (ds.has_splits) {
    for (std::size_t v = 0; v < labels.size(); ++v)
      if (labels.observed[v] && ds.splits[v] == Split::Test) use_test = true;
  }
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (!labels.observed[v]) continue;
    if (use_test && ds.splits[v] != Split::Test) continue;
    ++total;
    if (predicted[v] == labels.class_of[v]) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

struct UnrollEnergy {
  EnergyFamily e;
  Matrix H0;
  Matrix X;  // features handed to the energy (label matrix for lp)
};

/// The energies the unroll and detect-outliers commands can instantiate on a
/// directory dataset. For lp the start/features are the one-hot labels and
/// the natural prox is the label clamp.
UnrollEnergy energy_from_config(ConfigReader& r, const Dataset& ds,
                                const std::vector<std::string>& allowed,
                                ProxOperator* prox_out) {
  const std::string name = r.choice_or("energy", allowed.front(), allowed);
  const double lambda = r.real_or("lambda", 1.0);
  UnrollEnergy ue;
  if (name == "lp") {
    const MaskedLabels ml = masked_labels(ds.labels);
    ue.e = make_lp_energy(ml.classes(), lambda);
    ue.H0 = ml.Y;
    ue.X = ml.Y;
    if (prox_out) *prox_out = ProxOperator::clamp_labels(ml.Y, ml.mask);
    return ue;
  }
  const std::size_t d = ds.X.cols;
  const InputModel pi = InputModel::identity_map();
  if (name == "quadratic") {
    ue.e = make_quadratic(d, lambda, pi);
  } else if (name == "huber") {
    ue.e = make_huber_fidelity(d, lambda, pi);
  } else if (name == "logcosh") {
    ue.e = make_logcosh_fidelity(d, lambda, pi);
  } else {  // heterophily with a scaled-identity compatibility matrix
    const double scale = r.real_or("hetero_scale", -1.0);
    Matrix C = Matrix::identity(d);
    for (std::size_t j = 0; j < d; ++j) C.at(j, j) = scale;
    ue.e = make_heterophily(d, lambda, C, pi, FidelityKind::Quadratic, ds.g.m);
  }
  ue.H0 = ds.X;
  ue.X = ds.X;
  if (prox_out) *prox_out = prox_from_config(r);
  return ue;
}

int cmd_verify(std::uint64_t seed, std::size_t trials,
               const std::string& output) {
  const std::vector<ConformanceReport> reports = run_all_pairings(trials, seed);
  std::size_t failed = 0;
  for (const ConformanceReport& rep : reports)
    if (!rep.passed()) ++failed;
  ensure_dir(fs::path(output).parent_path().string());
  atomic_write_file(output, report_text(reports));
  std::cout << "verify: pairings=" << reports.size() << " failed=" << failed
            << " report=" << output << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_unroll(const std::string& config_path) {
  const Config c = Config::parse_file(config_path);
  ConfigReader r(c);
  const std::string dataset_dir = r.str("dataset_dir");
  const std::string output_dir = r.str_or("output_dir", "out");
  const std::size_t steps = checked_count(r.integer("steps"), "steps");
  (void)r.seed_or("seed", 1);  // accepted everywhere, unused here

  Dataset ds;
  ProxOperator prox = ProxOperator::identity();
  UnrollEnergy ue;
  {
    // the energy choice needs the dataset, so load before finish()
    ds = load_planetoid_like(dataset_dir);
    ue = energy_from_config(
        r, ds, {"quadratic", "huber", "logcosh", "heterophily", "lp"}, &prox);
  }
  const DescentAlgorithm algo = algo_from_config(r, prox, true);
  r.finish("unroll");

  const UnrollResult res =
      unroll(algo, ue.e, ds.g, ue.H0, ue.X, steps, Exec::Parallel);
  ensure_dir(output_dir);
  const std::string trace_path = path_join(output_dir, "trace.csv");
  atomic_write_file(trace_path, trajectory_csv(res.trajectory));
  std::cout << "unroll: energy=" << ue.e.id << " algo=" << algo_name(algo.kind)
            << " steps=" << steps
            << " final_energy=" << format_real(res.trajectory.points.back().second)
            << " rejected=" << res.trajectory.rejected_steps
            << " trace=" << trace_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  const Config c = Config::parse_file(config_path);
  ConfigReader r(c);
  const std::string dataset_dir = r.str("dataset_dir");
  const std::string output_dir = r.str_or("output_dir", "out");
  const std::string energy_name = r.choice_or(
      "energy", "quadratic", {"quadratic", "huber", "logcosh", "heterophily"});
  const std::string pi_name =
      r.choice_or("pi", "affine", {"identity", "affine", "mlp2"});
  const double lambda = r.real_or("lambda", 1.0);
  const bool lambda_trainable = r.flag_or("lambda_trainable", false);
  const std::size_t layers = checked_count(r.integer("layers"), "layers");
  const std::string init_name = r.choice_or("init", "pi", {"pi", "zero"});
  const std::size_t epochs = checked_count(r.integer("epochs"), "epochs");
  const double lr = r.real("lr");
  const std::string opt_name = r.choice_or("opt", "gd", {"gd", "adam"});
  const bool outer_backtrack = r.flag_or("outer_backtrack", false);
  const std::uint64_t seed = r.seed_or("seed", 1);
  const std::int64_t d_key = r.integer_or("d", -1);
  const std::int64_t hidden_key = r.integer_or("pi_hidden", 16);
  const double hetero_scale =
      energy_name == "heterophily" ? r.real_or("hetero_scale", -1.0) : 0.0;
  const ProxOperator prox = prox_from_config(r);
  // the inner unroll is differentiated through, which rules out backtracking
  DescentAlgorithm algo = algo_from_config(r, prox, false);
  r.finish("train");

  const Dataset ds = load_planetoid_like(dataset_dir);
  const std::size_t dx = ds.X.cols;
  std::size_t d = dx;
  if (pi_name == "identity") {
    if (d_key >= 0 && static_cast<std::size_t>(d_key) != dx)
      throw std::invalid_argument(
          "train: pi=identity fixes d to the feature width");
  } else {
    d = d_key >= 0 ? static_cast<std::size_t>(d_key) : 16;
  }

  InputModel pi = InputModel::identity_map();
  Rng rng(mix_seed(seed, 101));
  if (pi_name == "affine") {
    pi = InputModel::affine(rng.normal_matrix(dx, d, 0.1), Matrix(1, d));
  } else if (pi_name == "mlp2") {
    const std::size_t hidden = checked_count(hidden_key, "pi_hidden");
    pi = InputModel::mlp2(rng.normal_matrix(dx, hidden, 0.1), Matrix(1, hidden),
                          rng.normal_matrix(hidden, d, 0.1), Matrix(1, d));
  }

  EnergyFamily e;
  if (energy_name == "quadratic") {
    e = make_quadratic(d, lambda, pi, lambda_trainable);
  } else if (energy_name == "heterophily") {
    Matrix C = Matrix::identity(d);
    for (std::size_t j = 0; j < d; ++j) C.at(j, j) = hetero_scale;
    e = make_heterophily(d, lambda, C, pi, FidelityKind::Quadratic, ds.g.m,
                         lambda_trainable);
  } else if (lambda_trainable) {
    throw std::invalid_argument(
        "train: lambda_trainable needs the quadratic or heterophily energy");
  } else if (energy_name == "huber") {
    e = make_huber_fidelity(d, lambda, pi);
  } else {
    e = make_logcosh_fidelity(d, lambda, pi);
  }

  BilevelModel model;
  model.energy = e;
  model.algo = algo;
  model.layers = layers;
  model.init = init_name == "zero" ? InitKind::Zero : InitKind::PiOfX;

  TrainConfig tcfg;
  tcfg.epochs = epochs;
  tcfg.lr = lr;
  tcfg.opt = opt_name == "adam" ? OuterOpt::Adam : OuterOpt::Gd;
  tcfg.outer_backtrack = outer_backtrack;
  tcfg.seed = seed;

  const std::vector<Split> splits =
      ds.has_splits ? ds.splits : std::vector<Split>{};
  const TrainResult tr = train(model, ds.g, ds.X, ds.labels, splits, tcfg);

  std::string csv = "epoch,train_loss,train_acc,val_acc\n";
  for (const EpochMetrics& em : tr.history) {
    csv += std::to_string(em.epoch) + ',' + format_real(em.train_loss) + ',' +
           format_real(em.train_acc) + ',' + format_real(em.val_acc) + '\n';
  }
  ensure_dir(output_dir);
  const std::string metrics_path = path_join(output_dir, "metrics.csv");
  atomic_write_file(metrics_path, csv);

  const EpochMetrics& last = tr.history.back();
  std::cout << "train: epochs=" << epochs
            << " final_train_loss=" << format_real(last.train_loss)
            << " final_train_acc=" << format_real(last.train_acc)
            << " final_val_acc=" << format_real(last.val_acc)
            << " diverged=" << (tr.diverged ? 1 : 0)
            << " metrics=" << metrics_path << "\n";
  return tr.diverged ? 1 : 0;
}

int cmd_lp(const std::string& config_path, const std::string& mode_name) {
  const Config c = Config::parse_file(config_path);
  ConfigReader r(c);
  const std::string dataset_dir = r.str("dataset_dir");
  const std::string output_dir = r.str_or("output_dir", "out");
  LpConfig cfg;
  cfg.lambda = r.real_or("lambda", 1.0);
  cfg.gamma = r.real_or("gamma", 0.1);
  cfg.steps = checked_count(r.integer_or("steps", 100), "steps");
  cfg.mode = mode_name == "standard" ? LpMode::Standard : LpMode::Proximal;
  (void)r.seed_or("seed", 1);
  r.finish("lp");

  const Dataset ds = load_planetoid_like(dataset_dir);
  const LabelSet clamp_labels =
      ds.has_splits ? train_restricted(ds.labels, ds.splits) : ds.labels;
  if (clamp_labels.observed_count() == 0)
    throw std::invalid_argument("lp: no labeled nodes to propagate from");
  const LpResult res = label_propagate(ds.g, clamp_labels, cfg);

  std::string csv = "node_id,class_id\n";
  for (std::size_t v = 0; v < res.predicted.size(); ++v)
    csv += std::to_string(v) + ',' + std::to_string(res.predicted[v]) + '\n';
  ensure_dir(output_dir);
  atomic_write_file(path_join(output_dir, "predictions.csv"), csv);

  std::cout << "accuracy="
            << format_real(split_accuracy(res.predicted, ds.labels, ds)) << "\n";
  return 0;
}

int cmd_grmlp(const std::string& config_path, bool overparam) {
  const Config c = Config::parse_file(config_path);
  ConfigReader r(c);
  const std::string dataset_dir = r.str("dataset_dir");
  const std::string output_dir = r.str_or("output_dir", "out");
  GrMlpConfig cfg;
  cfg.lambda = r.real_or("lambda", 1.0);
  cfg.gamma = r.real_or("gamma", 0.1);
  cfg.steps = checked_count(r.integer_or("steps", 100), "steps");
  (void)r.seed_or("seed", 1);
  r.finish("grmlp");

  const Dataset ds = load_planetoid_like(dataset_dir);
  const Matrix X = overparam ? Matrix::identity(ds.g.n) : ds.X;
  const LabelSet fit_labels =
      ds.has_splits ? train_restricted(ds.labels, ds.splits) : ds.labels;
  if (fit_labels.observed_count() == 0)
    throw std::invalid_argument("grmlp: no labeled nodes to fit");
  const GrMlpResult res = gr_mlp_train(ds.g, X, fit_labels, cfg);
  const std::vector<long> predicted = predict_classes(res.H_embed.back());

  std::string csv = "node_id,class_id\n";
  for (std::size_t v = 0; v < predicted.size(); ++v)
    csv += std::to_string(v) + ',' + std::to_string(predicted[v]) + '\n';
  ensure_dir(output_dir);
  atomic_write_file(path_join(output_dir, "predictions.csv"), csv);

  std::cout << "accuracy="
            << format_real(split_accuracy(predicted, ds.labels, ds)) << "\n";
  return 0;
}

int cmd_kge_train(const std::string& config_path, const std::string& score_name,
                  std::size_t negatives, std::size_t layers) {
  const Config c = Config::parse_file(config_path);
  ConfigReader r(c);
  const std::string dataset_dir = r.str("dataset_dir");
  const std::string output_dir = r.str_or("output_dir", "out");
  KgeTrainConfig kcfg;
  kcfg.d = checked_count(r.integer_or("d", 8), "d");
  kcfg.epochs = checked_count(r.integer_or("epochs", 50), "epochs");
  kcfg.inner_gamma = r.real_or("gamma", 0.1);
  kcfg.lr = r.real_or("lr", 0.5);
  kcfg.outer_backtrack = r.flag_or("backtrack", true);
  kcfg.seed = r.seed_or("seed", 7);
  r.finish("kge-train");

  const std::string edges_path = path_join(dataset_dir, "edges.tsv");
  const std::vector<Triplet> triplets = load_triplet_file(edges_path);
  if (triplets.empty())
    throw std::invalid_argument("kge-train: " + edges_path + " has no edges");
  std::size_t n = 0;
  std::size_t kge_m = 0;
  for (const Triplet& t : triplets) {
    n = std::max({n, t.src + 1, t.dst + 1});
    kge_m = std::max(kge_m, t.rel + 1);
  }
  const ScoreKind score =
      score_name == "transe" ? ScoreKind::TransE : ScoreKind::DistMult;

  const HeteroGraph g_pos = build_graph(triplets, n, kge_m, false);
  const NegativeGraph ng =
      build_negative_graph(g_pos, negatives, mix_seed(kcfg.seed, 1));
  const KgeTrainResult res = train_kge(ng, score, layers, kcfg);

  ensure_dir(output_dir);
  atomic_write_file(path_join(output_dir, "embeddings.csv"),
                    csv_of_matrix(res.H));
  atomic_write_file(path_join(output_dir, "relations.csv"),
                    csv_of_matrix(res.energy.params().at("E")));
  std::string loss_csv = "epoch,loss\n";
  for (std::size_t i = 0; i < res.loss_history.size(); ++i)
    loss_csv += std::to_string(i) + ',' + format_real(res.loss_history[i]) + '\n';
  atomic_write_file(path_join(output_dir, "loss.csv"), loss_csv);
  const std::string model_txt = "score=" + score_name +
                                "\nd=" + std::to_string(kcfg.d) +
                                "\nn=" + std::to_string(n) +
                                "\nkge_m=" + std::to_string(kge_m) +
                                "\nlayers=" + std::to_string(layers) + "\n";
  atomic_write_file(path_join(output_dir, "model.txt"), model_txt);

  std::cout << "kge-train: score=" << score_name
            << " epochs=" << kcfg.epochs
            << " initial_loss=" << format_real(res.loss_history.front())
            << " final_loss=" << format_real(res.loss_history.back())
            << " diverged=" << (res.diverged ? 1 : 0)
            << " model=" << output_dir << "\n";
  return res.diverged ? 1 : 0;
}

int cmd_kge_infer(const std::string& config_path,
                  const std::string& new_triplets_path, std::size_t hits_k) {
  const Config c = Config::parse_file(config_path);
  ConfigReader r(c);
  const std::string dataset_dir = r.str("dataset_dir");
  const std::string output_dir = r.str_or("output_dir", "out");
  const std::string model_dir = r.str_or("model_dir", output_dir);
  InductiveConfig icfg;
  icfg.gamma = r.real_or("gamma", 0.1);
  icfg.negatives_per_edge =
      checked_count(r.integer_or("negatives", 2), "negatives");
  icfg.seed = r.seed_or("seed", 11);
  const std::int64_t layers_key = r.integer_or("layers", -1);
  icfg.hits_k = hits_k;
  r.finish("kge-infer");

  const Config model_cfg = Config::parse_file(path_join(model_dir, "model.txt"));
  ConfigReader mr(model_cfg);
  const std::string score_name =
      mr.choice_or("score", "distmult", {"transe", "distmult"});
  const std::size_t d = checked_count(mr.integer("d"), "d");
  const std::size_t n_base = checked_count(mr.integer("n"), "n");
  const std::size_t kge_m = checked_count(mr.integer("kge_m"), "kge_m");
  const std::size_t model_layers =
      checked_count(mr.integer("layers"), "layers");
  mr.finish("model.txt");
  icfg.layers = layers_key >= 0 ? static_cast<std::size_t>(layers_key)
                                : model_layers;

  const Matrix E = load_csv_matrix(path_join(model_dir, "relations.csv"));
  const Matrix H_base = load_csv_matrix(path_join(model_dir, "embeddings.csv"));
  if (E.rows != kge_m || E.cols != d)
    throw std::invalid_argument("kge-infer: relations.csv does not match model.txt");
  if (H_base.rows != n_base || H_base.cols != d)
    throw std::invalid_argument("kge-infer: embeddings.csv does not match model.txt");
  const ScoreKind score =
      score_name == "transe" ? ScoreKind::TransE : ScoreKind::DistMult;
  const EnergyFamily energy = make_kge_bce(d, score, kge_m, E);

  const std::vector<Triplet> base_positives =
      load_triplet_file(path_join(dataset_dir, "edges.tsv"));
  const std::vector<Triplet> new_triplets =
      load_triplet_file(new_triplets_path);
  std::size_t n_total = n_base;
  for (const Triplet& t : new_triplets)
    n_total = std::max({n_total, t.src + 1, t.dst + 1});

  const InductiveResult res = inductive_infer(energy, H_base, base_positives,
                                              n_total, new_triplets, icfg);

  std::string csv = "query,gold_rank,hits_at_k\n";
  for (const QueryRanking& qr : res.rankings) {
    csv += std::to_string(qr.query.src) + ':' + std::to_string(qr.query.rel) +
           ':' + std::to_string(qr.query.dst) + ',' +
           std::to_string(qr.gold_rank) + ',' + (qr.hit ? "1" : "0") + '\n';
  }
  ensure_dir(output_dir);
  const std::string rankings_path = path_join(output_dir, "rankings.csv");
  atomic_write_file(rankings_path, csv);

  std::cout << "kge-infer: queries=" << res.rankings.size() << " hits_at_"
            << hits_k << "=" << format_real(res.hits_at_k)
            << " isolated=" << res.isolated.size()
            << " rankings=" << rankings_path << "\n";
  return 0;
}

int cmd_detect_outliers(const std::string& config_path, double fraction) {
  const Config c = Config::parse_file(config_path);
  ConfigReader r(c);
  const std::string dataset_dir = r.str("dataset_dir");
  const std::string output_dir = r.str_or("output_dir", "out");
  const std::size_t steps =
      checked_count(r.integer_or("steps", 100), "steps");
  (void)r.seed_or("seed", 1);

  const Dataset ds = load_planetoid_like(dataset_dir);
  ProxOperator prox = ProxOperator::identity();
  const UnrollEnergy ue =
      energy_from_config(r, ds, {"huber", "quadratic", "logcosh"}, &prox);
  const DescentAlgorithm algo = algo_from_config(r, prox, true);
  r.finish("detect-outliers");

  const UnrollResult res =
      unroll(algo, ue.e, ds.g, ue.H0, ue.X, steps, Exec::Parallel);
  const OutlierResult out =
      detect_outliers(res.H, ds.X, ue.e.pi, fraction, nullptr);

  std::string csv = "rank,node_id,residual\n";
  for (std::size_t i = 0; i < out.ranked.size(); ++i) {
    const std::size_t v = out.ranked[i];
    csv += std::to_string(i + 1) + ',' + std::to_string(v) + ',' +
           format_real(out.residuals[v]) + '\n';
  }
  ensure_dir(output_dir);
  const std::string out_path = path_join(output_dir, "outliers.csv");
  atomic_write_file(out_path, csv);

  const double top =
      out.ranked.empty() ? 0.0 : out.residuals[out.ranked.front()];
  std::cout << "detect-outliers: flagged=" << out.ranked.size()
            << " top_residual=" << format_real(top) << " outliers=" << out_path
            << "\n";
  return 0;
}

}  // namespace

Dataset load_planetoid_like(const std::string& dir) {
  Dataset ds;
  ds.X = load_csv_matrix(path_join(dir, "features.csv"));
  const std::size_t n = ds.X.rows;
  const std::vector<Triplet> triplets =
      load_triplet_file(path_join(dir, "edges.tsv"));
  std::size_t m = 1;
  for (const Triplet& t : triplets) {
    if (t.src >= n || t.dst >= n)
      throw std::invalid_argument(
          "dataset " + dir + ": edges.tsv mentions node " +
          std::to_string(std::max(t.src, t.dst)) + " but features.csv has " +
          std::to_string(n) + " rows");
    m = std::max(m, t.rel + 1);
  }
  ds.g = build_graph(triplets, n, m, true);
  ds.labels = load_labels(path_join(dir, "labels.csv"), n);

  const std::string splits_path = path_join(dir, "splits.csv");
  if (fs::exists(splits_path)) {
    ds.splits = load_splits(splits_path, n);
    ds.has_splits = true;
  } else {
    std::cerr << "warning: " << splits_path
              << " not found, treating every labeled node as training\n";
  }
  return ds;
}

int run(int argc, char** argv) {
  CLI::App app{"unrolled-descent graph networks"};
  app.require_subcommand(1);

  std::uint64_t verify_seed = 1;
  std::size_t verify_trials = 3;
  std::string verify_output = "conformance_report.txt";
  CLI::App* sc_verify =
      app.add_subcommand("verify", "run the step/layer conformance suite");
  sc_verify->add_option("--seed", verify_seed, "base seed");
  sc_verify->add_option("--trials", verify_trials, "instances per pairing");
  sc_verify->add_option("--output", verify_output, "report path");

  std::string unroll_cfg;
  CLI::App* sc_unroll =
      app.add_subcommand("unroll", "unroll a descent on a dataset");
  sc_unroll->add_option("config", unroll_cfg, "key=value config file")
      ->required();

  std::string train_cfg;
  CLI::App* sc_train =
      app.add_subcommand("train", "fit energy parameters and a readout");
  sc_train->add_option("config", train_cfg, "key=value config file")
      ->required();

  std::string lp_cfg;
  std::string lp_mode = "prox";
  CLI::App* sc_lp = app.add_subcommand("lp", "label propagation");
  sc_lp->add_option("config", lp_cfg, "key=value config file")->required();
  sc_lp->add_option("--mode", lp_mode, "standard|prox")
      ->check(CLI::IsMember({"standard", "prox"}));

  std::string grmlp_cfg;
  bool grmlp_overparam = false;
  CLI::App* sc_grmlp =
      app.add_subcommand("grmlp", "graph-regularized linear model");
  sc_grmlp->add_option("config", grmlp_cfg, "key=value config file")
      ->required();
  sc_grmlp->add_flag("--overparam", grmlp_overparam,
                     "replace features with the identity");

  std::string kt_cfg;
  std::string kt_score = "distmult";
  std::size_t kt_negatives = 2;
  std::size_t kt_layers = 3;
  CLI::App* sc_kt =
      app.add_subcommand("kge-train", "train relation embeddings");
  sc_kt->add_option("config", kt_cfg, "key=value config file")->required();
  sc_kt->add_option("--score", kt_score, "transe|distmult")
      ->check(CLI::IsMember({"transe", "distmult"}));
  sc_kt->add_option("--negatives", kt_negatives, "corruptions per edge");
  sc_kt->add_option("--layers", kt_layers, "unrolled descent steps");

  std::string ki_cfg;
  std::string ki_new;
  std::size_t ki_k = 10;
  CLI::App* sc_ki =
      app.add_subcommand("kge-infer", "rank queries against new nodes");
  sc_ki->add_option("config", ki_cfg, "key=value config file")->required();
  sc_ki->add_option("--new-triplets", ki_new, "edges attaching the new nodes")
      ->required();
  sc_ki->add_option("--k", ki_k, "hits@k cutoff");

  std::string do_cfg;
  double do_fraction = 0.1;
  CLI::App* sc_do =
      app.add_subcommand("detect-outliers", "rank nodes by fidelity residual");
  sc_do->add_option("config", do_cfg, "key=value config file")->required();
  sc_do->add_option("--fraction", do_fraction, "fraction of nodes to flag");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    apply_thread_env();
    if (sc_verify->parsed())
      return cmd_verify(verify_seed, verify_trials, verify_output);
    if (sc_unroll->parsed()) return cmd_unroll(unroll_cfg);
    if (sc_train->parsed()) return cmd_train(train_cfg);
    if (sc_lp->parsed()) return cmd_lp(lp_cfg, lp_mode);
    if (sc_grmlp->parsed()) return cmd_grmlp(grmlp_cfg, grmlp_overparam);
    if (sc_kt->parsed())
      return cmd_kge_train(kt_cfg, kt_score, kt_negatives, kt_layers);
    if (sc_ki->parsed()) return cmd_kge_infer(ki_cfg, ki_new, ki_k);
    if (sc_do->parsed()) return cmd_detect_outliers(do_cfg, do_fraction);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace ugnn
