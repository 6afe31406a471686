#include "ugnn/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ugnn {

namespace {

std::size_t masked_count(const std::vector<char>& mask) {
  std::size_t c = 0;
  for (char v : mask)
    if (v) ++c;
  return c;
}

void check_mask_labels(const Matrix& logits, const LabelSet& labels,
                       const std::vector<char>& mask) {
  if (mask.size() != logits.rows || labels.size() != logits.rows)
    throw std::invalid_argument("bilevel: mask/label arity mismatch");
  for (std::size_t v = 0; v < mask.size(); ++v)
    if (mask[v] && labels.class_of[v] < 0)
      throw std::invalid_argument("bilevel: loss mask hits an unlabeled node");
}

/// softmax of one row into buf, returns logsumexp
double row_softmax(const double* z, std::size_t c, std::vector<double>& buf) {
  double m = z[0];
  for (std::size_t j = 1; j < c; ++j) m = std::max(m, z[j]);
  double s = 0.0;
  buf.resize(c);
  for (std::size_t j = 0; j < c; ++j) {
    buf[j] = std::exp(z[j] - m);
    s += buf[j];
  }
  for (std::size_t j = 0; j < c; ++j) buf[j] /= s;
  return m + std::log(s);
}

std::size_t argmax_row(const double* z, std::size_t c) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (z[j] > z[best]) best = j;
  return best;
}

}  // namespace

double masked_cross_entropy(const Matrix& logits, const LabelSet& labels,
                            const std::vector<char>& mask) {
  check_mask_labels(logits, labels, mask);
  const std::size_t cnt = masked_count(mask);
  if (cnt == 0) return 0.0;
  std::vector<double> buf;
  double total = 0.0;
  for (std::size_t v = 0; v < logits.rows; ++v) {
    if (!mask[v]) continue;
    const double lse = row_softmax(logits.row(v), logits.cols, buf);
    total += lse - logits.at(v, static_cast<std::size_t>(labels.class_of[v]));
  }
  return total / static_cast<double>(cnt);
}

double masked_accuracy(const Matrix& logits, const LabelSet& labels,
                       const std::vector<char>& mask) {
  check_mask_labels(logits, labels, mask);
  const std::size_t cnt = masked_count(mask);
  if (cnt == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t v = 0; v < logits.rows; ++v) {
    if (!mask[v]) continue;
    if (argmax_row(logits.row(v), logits.cols) ==
        static_cast<std::size_t>(labels.class_of[v]))
      ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(cnt);
}

Matrix cross_entropy_seed(const Matrix& logits, const LabelSet& labels,
                          const std::vector<char>& mask) {
  check_mask_labels(logits, labels, mask);
  Matrix seed(logits.rows, logits.cols);
  const std::size_t cnt = masked_count(mask);
  if (cnt == 0) return seed;
  const double inv = 1.0 / static_cast<double>(cnt);
  std::vector<double> buf;
  for (std::size_t v = 0; v < logits.rows; ++v) {
    if (!mask[v]) continue;
    row_softmax(logits.row(v), logits.cols, buf);
    for (std::size_t j = 0; j < logits.cols; ++j)
      seed.at(v, j) = buf[j] * inv;
    seed.at(v, static_cast<std::size_t>(labels.class_of[v])) -= inv;
  }
  return seed;
}

ForwardResult bilevel_forward(const BilevelModel& model, const HeteroGraph& g,
                              const Matrix& X, const LabelSet& labels,
                              const std::vector<char>& mask) {
  const std::size_t classes = model.readout.W.cols;
  if (model.readout.W.rows != model.energy.d || classes == 0 ||
      model.readout.b.rows != 1 || model.readout.b.cols != classes)
    throw std::invalid_argument("bilevel: readout shape mismatch");

  ForwardResult fr;
  if (model.init == InitKind::Zero) {
    Matrix zeros(g.n, model.energy.d);
    fr.rec = record_unroll(model.energy, model.algo, g, X, model.layers, &zeros);
  } else {
    fr.rec = record_unroll(model.energy, model.algo, g, X, model.layers, nullptr);
  }
  Tape& t = fr.rec.tape;
  const int w_id = t.param("theta.W", model.readout.W);
  const int b_id = t.param("theta.b", model.readout.b);
  fr.logits_id = t.affine(fr.rec.h_final, w_id, b_id);
  fr.logits = t.value(fr.logits_id);
  fr.H = t.value(fr.rec.h_final);
  fr.loss = masked_cross_entropy(fr.logits, labels, mask);
  return fr;
}

std::map<std::string, Matrix> bilevel_backward(const BilevelModel& model,
                                               const ForwardResult& fr,
                                               const LabelSet& labels,
                                               const std::vector<char>& mask) {
  std::map<int, Matrix> seeds;
  seeds[fr.logits_id] = cross_entropy_seed(fr.logits, labels, mask);
  std::map<std::string, Matrix> grads = fr.rec.tape.backward(seeds);

  // the tape sees the effective lambda; report the preimage gradient
  auto it = grads.find("lambda_eff");
  if (it != grads.end()) {
    Matrix raw = it->second;
    raw.data[0] *= sigmoid(model.energy.lambda_raw);
    grads.erase(it);
    grads["lambda_raw"] = std::move(raw);
  }
  return grads;
}

namespace {

std::map<std::string, Matrix> collect_params(const BilevelModel& m) {
  std::map<std::string, Matrix> p = m.energy.params();
  p["theta.W"] = m.readout.W;
  p["theta.b"] = m.readout.b;
  return p;
}

void assign_params(BilevelModel& m, const std::map<std::string, Matrix>& p) {
  for (const auto& [name, value] : p) {
    if (name == "theta.W")
      m.readout.W = value;
    else if (name == "theta.b")
      m.readout.b = value;
    else
      m.energy.set_param(name, value);
  }
}

}  // namespace

TrainResult train(BilevelModel model, const HeteroGraph& g, const Matrix& X,
                  const LabelSet& labels, const std::vector<Split>& splits,
                  const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  if (cfg.outer_backtrack && cfg.opt == OuterOpt::Adam)
    throw std::invalid_argument(
        "train: outer backtracking applies to the plain gradient step");
  if (!splits.empty() && splits.size() != g.n)
    throw std::invalid_argument("train: splits arity mismatch");

  std::vector<char> train_mask(g.n, 0), val_mask(g.n, 0);
  for (std::size_t v = 0; v < g.n; ++v) {
    if (!labels.observed[v]) continue;
    if (splits.empty()) {
      train_mask[v] = 1;
    } else if (splits[v] == Split::Train) {
      train_mask[v] = 1;
    } else if (splits[v] == Split::Val) {
      val_mask[v] = 1;
    }
  }
  if (masked_count(train_mask) == 0)
    throw std::invalid_argument("train: no training nodes");

  const std::size_t classes = labels.num_classes();
  if (model.readout.W.empty()) {
    Rng rng(cfg.seed);
    model.readout.W = rng.normal_matrix(model.energy.d, classes, 0.1);
    model.readout.b = Matrix(1, classes);
  }

  TrainResult out;
  std::map<std::string, Matrix> am, av;  // adam moments
  std::size_t adam_t = 0;

  auto eval_metrics = [&](std::size_t epoch, const ForwardResult& fr) {
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = fr.loss;
    em.train_acc = masked_accuracy(fr.logits, labels, train_mask);
    em.val_acc = masked_accuracy(fr.logits, labels, val_mask);
    return em;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ForwardResult fr = bilevel_forward(model, g, X, labels, train_mask);
    out.history.push_back(eval_metrics(epoch, fr));
    if (!(fr.loss < kDivergenceLoss)) {
      out.diverged = true;
      out.model = std::move(model);
      return out;
    }
    const auto grads = bilevel_backward(model, fr, labels, train_mask);
    const auto before = collect_params(model);

    auto apply_gd = [&](double scale) {
      std::map<std::string, Matrix> next = before;
      for (auto& [name, value] : next) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        for (std::size_t i = 0; i < value.data.size(); ++i)
          value.data[i] -= scale * it->second.data[i];
      }
      assign_params(model, next);
    };

    if (cfg.opt == OuterOpt::Gd) {
      if (!cfg.outer_backtrack) {
        apply_gd(cfg.lr);
      } else {
        bool accepted = false;
        double scale = cfg.lr;
        for (int h = 0; h <= 30 && !accepted; ++h, scale *= 0.5) {
          apply_gd(scale);
          const double trial =
              bilevel_forward(model, g, X, labels, train_mask).loss;
          if (std::isfinite(trial) && trial <= fr.loss)
            accepted = true;
          else
            assign_params(model, before);
        }
      }
    } else {
      ++adam_t;
      std::map<std::string, Matrix> next = before;
      for (auto& [name, value] : next) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        const Matrix& gmat = it->second;
        if (am.find(name) == am.end()) {
          am[name] = Matrix(value.rows, value.cols);
          av[name] = Matrix(value.rows, value.cols);
        }
        Matrix& mm = am[name];
        Matrix& vv = av[name];
        const double c1 =
            1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
        const double c2 =
            1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
        for (std::size_t i = 0; i < value.data.size(); ++i) {
          const double gv = gmat.data[i];
          mm.data[i] = cfg.adam_beta1 * mm.data[i] + (1.0 - cfg.adam_beta1) * gv;
          vv.data[i] =
              cfg.adam_beta2 * vv.data[i] + (1.0 - cfg.adam_beta2) * gv * gv;
          value.data[i] -= cfg.lr * (mm.data[i] / c1) /
                           (std::sqrt(vv.data[i] / c2) + cfg.adam_eps);
        }
      }
      assign_params(model, next);
    }
  }

  ForwardResult fr = bilevel_forward(model, g, X, labels, train_mask);
  out.history.push_back(eval_metrics(cfg.epochs, fr));
  if (!(fr.loss < kDivergenceLoss)) out.diverged = true;
  out.model = std::move(model);
  return out;
}

OutlierResult detect_outliers(const Matrix& H, const Matrix& X,
                              const InputModel& pi, double fraction,
                              const std::vector<std::size_t>* planted) {
  if (!(fraction >= 0.0) || fraction > 1.0)
    throw std::invalid_argument("detect_outliers: fraction must be in [0,1]");
  const Matrix P = pi.apply(X);
  if (!P.same_shape(H))
    throw std::invalid_argument("detect_outliers: pi(X) and H disagree");

  OutlierResult out;
  out.residuals.resize(H.rows);
  for (std::size_t v = 0; v < H.rows; ++v) {
    double s = 0.0;
    for (std::size_t j = 0; j < H.cols; ++j) {
      const double t = H.at(v, j) - P.at(v, j);
      s += t * t;
    }
    out.residuals[v] = std::sqrt(s);
  }

  std::vector<std::size_t> order(H.rows);
  for (std::size_t v = 0; v < H.rows; ++v) order[v] = v;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out.residuals[a] != out.residuals[b])
      return out.residuals[a] > out.residuals[b];
    return a < b;
  });
  const std::size_t k = std::min(
      H.rows,
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(H.rows))));
  out.ranked.assign(order.begin(), order.begin() + static_cast<long>(k));

  if (planted && !planted->empty()) {
    std::size_t hit = 0;
    for (std::size_t id : out.ranked)
      if (std::find(planted->begin(), planted->end(), id) != planted->end())
        ++hit;
    out.detection_rate =
        100.0 * static_cast<double>(hit) / static_cast<double>(planted->size());
  }
  return out;
}

}  // namespace ugnn
