#include "egospeed/engine.hpp"

#include <cmath>
#include <string>

namespace egospeed {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RArr = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ViewGeometry {
  int offset = 0;
  int count = 0;
};

ViewGeometry geometry(GraphView v, const CategoryQuota& q) {
  if (v == GraphView::kAll) return {0, q.total()};
  const auto c = static_cast<SuperCategory>(static_cast<int>(v));
  return {q.offset(c), q.count(c)};
}

struct GraphLayerTape {
  std::vector<RMat> cheb;  // T_k(L~) applied to the layer input, k = 0..K
  RMat pre;
  RMat out;
};

struct LstmLayerTape {
  std::vector<RMat> gates;  // activated [i f g o], B x 4h per step
  std::vector<RMat> c;
  std::vector<RMat> tanh_c;
  std::vector<RMat> h;
};

struct ViewTape {
  ViewGeometry geo;
  std::vector<std::uint8_t> real;  // per stacked row
  std::vector<int> block_real;     // per (frame, clip) block
  RMat input;                      // stacked rows x 4
  std::vector<GraphLayerTape> layers;
  RMat pooled;  // row t * B + b
  IMat argmax;  // row inside the block that won the max, -1 if none
  std::vector<LstmLayerTape> lstm;
};

struct Tape {
  int batch = 0;
  int history = 0;
  std::vector<ViewTape> views;
  std::vector<RMat> dense_in;  // input to each classifier layer, output layer last
  std::vector<RMat> dense_pre;  // hidden pre-activations
  RMat logits;
};

// Block-structured L~ product over stacked rows.
void apply_rescaled(const RMat& in, RMat& out, const ViewTape& vt) {
  const int n = vt.geo.count;
  const auto cols = in.cols();
  out.resize(in.rows(), cols);
  Eigen::RowVectorXd mean(cols);
  for (std::size_t q = 0; q < vt.block_real.size(); ++q) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(q) * n;
    const int m = vt.block_real[q];
    if (m > 0) {
      mean.setZero();
      for (int i = 0; i < n; ++i) {
        if (vt.real[r0 + i]) mean += in.row(r0 + i);
      }
      mean /= static_cast<double>(m);
    }
    for (int i = 0; i < n; ++i) {
      if (vt.real[r0 + i]) {
        out.row(r0 + i) = -mean;
      } else {
        out.row(r0 + i) = -in.row(r0 + i);
      }
    }
  }
}

void check_batch(ClipBatch batch, const ModelConfig& cfg) {
  if (batch.empty()) fail(ErrorKind::kInvalidInput, "empty batch");
  for (const Clip* c : batch) {
    if (c->frames() != cfg.history || c->nodes() != cfg.quota.total()) {
      fail(ErrorKind::kShape, "clip is " + std::to_string(c->frames()) + " x " +
                                  std::to_string(c->nodes()) + " but model expects " +
                                  std::to_string(cfg.history) + " x " +
                                  std::to_string(cfg.quota.total()));
    }
    if (c->mask.rows() != cfg.history || c->mask.cols() != cfg.quota.total()) {
      fail(ErrorKind::kShape, "clip mask does not match T x N");
    }
  }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void forward_view(ClipBatch batch, const ViewParams& vp, const ModelConfig& cfg, ViewTape& vt) {
  const int B = static_cast<int>(batch.size());
  const int T = cfg.history;
  const int K = cfg.cheb_order;
  vt.geo = geometry(vp.view, cfg.quota);
  const int n = vt.geo.count;
  const int Q = T * B;
  const Eigen::Index R = static_cast<Eigen::Index>(Q) * n;

  vt.real.assign(R, 0);
  vt.block_real.assign(Q, 0);
  vt.input.setZero(R, 4);
  for (int t = 0; t < T; ++t) {
    for (int b = 0; b < B; ++b) {
      const Clip& clip = *batch[b];
      const int q = t * B + b;
      const Eigen::Index r0 = static_cast<Eigen::Index>(q) * n;
      for (int i = 0; i < n; ++i) {
        const bool real = clip.mask(t, vt.geo.offset + i);
        vt.real[r0 + i] = real ? 1 : 0;
        vt.block_real[q] += real ? 1 : 0;
        vt.input.row(r0 + i) = clip.features[t].row(vt.geo.offset + i);
      }
    }
  }

  vt.layers.resize(vp.graph.layers.size());
  const RMat* in = &vt.input;
  for (std::size_t l = 0; l < vp.graph.layers.size(); ++l) {
    const ChebLayerParams& p = vp.graph.layers[l];
    GraphLayerTape& lt = vt.layers[l];
    lt.cheb.resize(K + 1);
    lt.cheb[0] = *in;
    if (K >= 1) apply_rescaled(*in, lt.cheb[1], vt);
    RMat tmp;
    for (int k = 2; k <= K; ++k) {
      apply_rescaled(lt.cheb[k - 1], tmp, vt);
      lt.cheb[k] = 2.0 * tmp - lt.cheb[k - 2];
    }
    lt.pre.noalias() = lt.cheb[0] * p.weights[0];
    for (int k = 1; k <= K; ++k) lt.pre.noalias() += lt.cheb[k] * p.weights[k];
    lt.pre.rowwise() += p.bias.transpose();
    lt.out = cfg.graph_activation == Activation::kRelu ? RMat(lt.pre.cwiseMax(0.0)) : lt.pre;
    in = &lt.out;
  }

  const RMat& top = *in;
  const auto d = top.cols();
  vt.pooled.setZero(Q, d);
  vt.argmax.setConstant(Q, d, -1);
  for (int q = 0; q < Q; ++q) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(q) * n;
    for (int i = 0; i < n; ++i) {
      if (!vt.real[r0 + i]) continue;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double v = top(r0 + i, j);
        if (vt.argmax(q, j) < 0 || v > vt.pooled(q, j)) {
          vt.pooled(q, j) = v;
          vt.argmax(q, j) = i;
        }
      }
    }
  }

  if (!vp.lstm) return;
  vt.lstm.resize(vp.lstm->layers.size());
  for (std::size_t l = 0; l < vp.lstm->layers.size(); ++l) {
    const LstmLayer& layer = vp.lstm->layers[l];
    const Eigen::Index h = layer.hidden();
    const Eigen::Index in_dim = layer.in_dim();
    LstmLayerTape& lt = vt.lstm[l];
    lt.gates.resize(T);
    lt.c.resize(T);
    lt.tanh_c.resize(T);
    lt.h.resize(T);
    const RMat zeros = RMat::Zero(B, h);
    for (int t = 0; t < T; ++t) {
      const RMat& h_prev = t == 0 ? zeros : lt.h[t - 1];
      const RMat& c_prev = t == 0 ? zeros : lt.c[t - 1];
      RMat& z = lt.gates[t];
      if (l == 0) {
        z.noalias() = vt.pooled.middleRows(static_cast<Eigen::Index>(t) * B, B) *
                      layer.weight.topRows(in_dim);
      } else {
        z.noalias() = vt.lstm[l - 1].h[t] * layer.weight.topRows(in_dim);
      }
      z.noalias() += h_prev * layer.weight.bottomRows(h);
      z.rowwise() += layer.bias.transpose();
      z.leftCols(2 * h) = z.leftCols(2 * h).unaryExpr(&logistic);
      z.middleCols(2 * h, h) = z.middleCols(2 * h, h).array().tanh().matrix();
      z.rightCols(h) = z.rightCols(h).unaryExpr(&logistic);
      lt.c[t] = (z.middleCols(h, h).array() * c_prev.array() +
                 z.leftCols(h).array() * z.middleCols(2 * h, h).array())
                    .matrix();
      lt.tanh_c[t] = lt.c[t].array().tanh().matrix();
      lt.h[t] = (z.rightCols(h).array() * lt.tanh_c[t].array()).matrix();
    }
  }
}

void forward(ClipBatch batch, const ModelParams& params, Tape& tape) {
  const ModelConfig& cfg = params.config;
  check_batch(batch, cfg);
  const int B = static_cast<int>(batch.size());
  const int T = cfg.history;
  tape.batch = B;
  tape.history = T;
  tape.views.resize(params.views.size());

  RMat features(B, cfg.classifier_input_width());
  Eigen::Index pos = 0;
  for (std::size_t v = 0; v < params.views.size(); ++v) {
    ViewTape& vt = tape.views[v];
    forward_view(batch, params.views[v], cfg, vt);
    if (params.views[v].lstm) {
      const RMat& e = vt.lstm.back().h[T - 1];
      features.middleCols(pos, e.cols()) = e;
      pos += e.cols();
    } else {
      const auto d = vt.pooled.cols();
      for (int t = 0; t < T; ++t) {
        features.middleCols(pos + t * d, d) =
            vt.pooled.middleRows(static_cast<Eigen::Index>(t) * B, B);
      }
      pos += T * d;
    }
  }

  const auto& hidden = params.classifier.hidden;
  tape.dense_in.resize(hidden.size() + 1);
  tape.dense_pre.resize(hidden.size());
  tape.dense_in[0] = std::move(features);
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    RMat& pre = tape.dense_pre[l];
    pre.noalias() = tape.dense_in[l] * hidden[l].weight;
    pre.rowwise() += hidden[l].bias.transpose();
    tape.dense_in[l + 1] =
        cfg.mlp_activation == Activation::kRelu ? RMat(pre.cwiseMax(0.0)) : pre;
  }
  const DenseLayer& out = params.classifier.output;
  tape.logits.noalias() = tape.dense_in.back() * out.weight;
  tape.logits.rowwise() += out.bias.transpose();
}

// Sum over k of T_k(L~) g_k by Clenshaw's recurrence.
RMat chebyshev_adjoint(const std::vector<RMat>& g, const ViewTape& vt) {
  const int K = static_cast<int>(g.size()) - 1;
  if (K == 0) return g[0];
  RMat b1 = g[K];
  RMat b2 = RMat::Zero(g[K].rows(), g[K].cols());
  RMat tmp;
  for (int k = K - 1; k >= 1; --k) {
    apply_rescaled(b1, tmp, vt);
    RMat b0 = g[k] + 2.0 * tmp - b2;
    b2 = std::move(b1);
    b1 = std::move(b0);
  }
  apply_rescaled(b1, tmp, vt);
  return g[0] + tmp - b2;
}

// Returns the gradient with respect to the stacked graph input.
RMat backward_view(const ViewTape& vt, const ViewParams& vp, const ModelConfig& cfg,
                   const RMat& d_feature_block, ViewParams& grad, bool need_input_grad) {
  const int T = cfg.history;
  const Eigen::Index B = d_feature_block.rows();
  const auto d = vt.pooled.cols();
  RMat d_pooled = RMat::Zero(vt.pooled.rows(), d);

  if (vp.lstm) {
    const auto& layers = vp.lstm->layers;
    std::vector<RMat> d_out(T);  // gradient arriving at each step's h from above
    const Eigen::Index h_top = layers.back().hidden();
    for (int t = 0; t < T; ++t) d_out[t] = RMat::Zero(B, h_top);
    d_out[T - 1] = d_feature_block;
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
      const LstmLayer& layer = layers[l];
      LstmLayer& g = grad.lstm->layers[l];
      const LstmLayerTape& lt = vt.lstm[l];
      const Eigen::Index h = layer.hidden();
      const Eigen::Index in_dim = layer.in_dim();
      RMat dh_carry = RMat::Zero(B, h);
      RMat dc_carry = RMat::Zero(B, h);
      RMat dz(B, 4 * h);
      std::vector<RMat> d_in(T);
      for (int t = T - 1; t >= 0; --t) {
        const RMat& z = lt.gates[t];
        const auto i = z.leftCols(h).array();
        const auto f = z.middleCols(h, h).array();
        const auto gg = z.middleCols(2 * h, h).array();
        const auto o = z.rightCols(h).array();
        const auto tc = lt.tanh_c[t].array();
        const RMat dh = d_out[t] + dh_carry;
        const RArr dc =
            dc_carry.array() + dh.array() * o * (1.0 - tc * tc);
        dz.rightCols(h) = (dh.array() * tc * o * (1.0 - o)).matrix();
        dz.leftCols(h) = (dc * gg * i * (1.0 - i)).matrix();
        dz.middleCols(2 * h, h) = (dc * i * (1.0 - gg * gg)).matrix();
        if (t > 0) {
          dz.middleCols(h, h) = (dc * lt.c[t - 1].array() * f * (1.0 - f)).matrix();
        } else {
          dz.middleCols(h, h).setZero();
        }
        dc_carry = (dc * f).matrix();

        if (l == 0) {
          g.weight.topRows(in_dim).noalias() +=
              vt.pooled.middleRows(static_cast<Eigen::Index>(t) * B, B).transpose() * dz;
        } else {
          g.weight.topRows(in_dim).noalias() += vt.lstm[l - 1].h[t].transpose() * dz;
        }
        if (t > 0) g.weight.bottomRows(h).noalias() += lt.h[t - 1].transpose() * dz;
        g.bias += dz.colwise().sum().transpose();
        d_in[t].noalias() = dz * layer.weight.topRows(in_dim).transpose();
        dh_carry.noalias() = dz * layer.weight.bottomRows(h).transpose();
      }
      d_out = std::move(d_in);
    }
    for (int t = 0; t < T; ++t) d_pooled.middleRows(static_cast<Eigen::Index>(t) * B, B) = d_out[t];
  } else {
    for (int t = 0; t < T; ++t) {
      d_pooled.middleRows(static_cast<Eigen::Index>(t) * B, B) =
          d_feature_block.middleCols(static_cast<Eigen::Index>(t) * d, d);
    }
  }

  const int n = vt.geo.count;
  RMat d_act = RMat::Zero(vt.layers.back().out.rows(), d);
  for (Eigen::Index q = 0; q < vt.pooled.rows(); ++q) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const int winner = vt.argmax(q, j);
      if (winner >= 0) d_act(q * n + winner, j) += d_pooled(q, j);
    }
  }

  for (int l = static_cast<int>(vt.layers.size()) - 1; l >= 0; --l) {
    const GraphLayerTape& lt = vt.layers[l];
    const ChebLayerParams& p = vp.graph.layers[l];
    ChebLayerParams& g = grad.graph.layers[l];
    RMat d_pre = cfg.graph_activation == Activation::kRelu
                     ? RMat((lt.pre.array() > 0.0).select(d_act.array(), 0.0).matrix())
                     : d_act;
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      g.weights[k].noalias() += lt.cheb[k].transpose() * d_pre;
    }
    g.bias += d_pre.colwise().sum().transpose();
    if (l == 0 && !need_input_grad) break;
    std::vector<RMat> d_cheb(p.weights.size());
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      d_cheb[k].noalias() = d_pre * p.weights[k].transpose();
    }
    d_act = chebyshev_adjoint(d_cheb, vt);
  }
  return need_input_grad ? d_act : RMat();
}

double softmax_cross_entropy(const RMat& logits, ClipBatch batch, RMat* d_logits) {
  const auto B = logits.rows();
  double total = 0.0;
  if (d_logits) d_logits->resize(B, logits.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    const int label = index_of(batch[b]->label);
    if (label < 0 || label >= logits.cols()) fail(ErrorKind::kInvalidInput, "label out of range");
    const double m = logits.row(b).maxCoeff();
    const double lse = m + std::log((logits.row(b).array() - m).exp().sum());
    total += lse - logits(b, label);
    if (d_logits) {
      d_logits->row(b) = (logits.row(b).array() - lse).exp().matrix() / static_cast<double>(B);
      (*d_logits)(b, label) -= 1.0 / static_cast<double>(B);
    }
  }
  return total / static_cast<double>(B);
}

}  // namespace

Mat apply_rescaled_laplacian(const Mat& x, const MaskVector& mask) {
  if (mask.size() != x.rows()) fail(ErrorKind::kShape, "apply_rescaled_laplacian: mask length");
  ViewTape vt;
  vt.geo = {0, static_cast<int>(x.rows())};
  vt.real.resize(x.rows());
  vt.block_real = {0};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    vt.real[i] = mask(i) ? 1 : 0;
    vt.block_real[0] += mask(i) ? 1 : 0;
  }
  RMat out;
  apply_rescaled(RMat(x), out, vt);
  return out;
}

std::vector<const Clip*> pointers(std::span<const Clip> clips) {
  std::vector<const Clip*> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(&c);
  return out;
}

Mat batch_logits(ClipBatch batch, const ModelParams& params) {
  Tape tape;
  forward(batch, params, tape);
  return tape.logits;
}

double batch_loss(ClipBatch batch, const ModelParams& params) {
  Tape tape;
  forward(batch, params, tape);
  return softmax_cross_entropy(tape.logits, batch, nullptr);
}

double batch_loss_and_gradient(ClipBatch batch, const ModelParams& params, GradientSet& grads,
                               InputGradients* input_grads) {
  Tape tape;
  forward(batch, params, tape);
  RMat d_logits;
  const double loss = softmax_cross_entropy(tape.logits, batch, &d_logits);
  if (!std::isfinite(loss)) fail(ErrorKind::kNumericFault, "non-finite loss");

  grads = zeros_like(params);
  const auto& hidden = params.classifier.hidden;
  grads.classifier.output.weight.noalias() = tape.dense_in.back().transpose() * d_logits;
  grads.classifier.output.bias = d_logits.colwise().sum().transpose();
  RMat d_act = d_logits * params.classifier.output.weight.transpose();
  for (int l = static_cast<int>(hidden.size()) - 1; l >= 0; --l) {
    RMat d_pre = params.config.mlp_activation == Activation::kRelu
                     ? RMat((tape.dense_pre[l].array() > 0.0).select(d_act.array(), 0.0).matrix())
                     : d_act;
    grads.classifier.hidden[l].weight.noalias() = tape.dense_in[l].transpose() * d_pre;
    grads.classifier.hidden[l].bias = d_pre.colwise().sum().transpose();
    d_act.noalias() = d_pre * hidden[l].weight.transpose();
  }

  const int B = tape.batch;
  const int T = tape.history;
  if (input_grads) {
    input_grads->assign(B, std::vector<Mat>(T, Mat::Zero(params.config.quota.total(), 4)));
  }
  Eigen::Index pos = 0;
  for (std::size_t v = 0; v < params.views.size(); ++v) {
    const ViewParams& vp = params.views[v];
    const ViewTape& vt = tape.views[v];
    const Eigen::Index width = vp.lstm ? vp.lstm->layers.back().hidden() : T * vt.pooled.cols();
    const RMat block = d_act.middleCols(pos, width);
    pos += width;
    const RMat d_input = backward_view(vt, vp, params.config, block, grads.views[v],
                                       input_grads != nullptr);
    if (!input_grads) continue;
    const int n = vt.geo.count;
    for (int t = 0; t < T; ++t) {
      for (int b = 0; b < B; ++b) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(t * B + b) * n;
        (*input_grads)[b][t].middleRows(vt.geo.offset, n) += d_input.middleRows(r0, n);
      }
    }
  }

  for (const auto& t : tensors(grads)) {
    const Eigen::Map<const Vec> flat(t.data, t.size());
    if (!flat.allFinite()) fail(ErrorKind::kNumericFault, "non-finite gradient in " + t.name);
  }
  return loss;
}

}  // namespace egospeed
