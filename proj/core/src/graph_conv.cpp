#include "egospeed/graph_conv.hpp"

#include <Eigen/Eigenvalues>
#include <string>

namespace egospeed {

Mat build_adjacency(Eigen::Index n_real, Eigen::Index n_total) {
  if (n_total <= 0) fail(ErrorKind::kInvalidConfig, "build_adjacency: n_total must be positive");
  if (n_real < 0 || n_real > n_total) {
    fail(ErrorKind::kInvalidConfig, "build_adjacency: n_real outside [0, n_total]");
  }
  Mat a = Mat::Identity(n_total, n_total);
  a.topLeftCorner(n_real, n_real).setOnes();
  return a;
}

Mat normalized_laplacian(const Mat& a) {
  if (a.rows() != a.cols()) fail(ErrorKind::kShape, "normalized_laplacian: adjacency not square");
  const Vec degree = a.rowwise().sum();
  for (Eigen::Index i = 0; i < degree.size(); ++i) {
    if (!(degree(i) > 0)) {
      fail(ErrorKind::kDegenerateGraph,
           "normalized_laplacian: node " + std::to_string(i) + " has zero degree");
    }
  }
  const Vec inv_sqrt = degree.array().rsqrt().matrix();
  return Mat::Identity(a.rows(), a.cols()) - inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

GraphOperator GraphOperator::from_adjacency(const Mat& adjacency) {
  GraphOperator g;
  g.n = adjacency.rows();
  g.adjacency = adjacency;
  g.laplacian = normalized_laplacian(adjacency);
  g.degree = adjacency.rowwise().sum().asDiagonal();
  g.rescaled = g.laplacian - Mat::Identity(g.n, g.n);
  return g;
}

GraphOperator make_graph_operator(Eigen::Index n_real, Eigen::Index n_total) {
  return GraphOperator::from_adjacency(build_adjacency(n_real, n_total));
}

void ChebLayerParams::validate() const {
  if (weights.empty()) fail(ErrorKind::kShape, "cheb layer needs at least W_0");
  for (const Mat& w : weights) {
    if (w.rows() != weights.front().rows() || w.cols() != bias.size()) {
      fail(ErrorKind::kShape, "cheb layer weights disagree in shape");
    }
  }
}

namespace {

void check_operands(const Mat& x, const GraphOperator& g, const ChebLayerParams& p) {
  p.validate();
  if (x.rows() != g.n) {
    fail(ErrorKind::kShape, "cheb_conv: X has " + std::to_string(x.rows()) +
                                " rows but graph has " + std::to_string(g.n) + " nodes");
  }
  if (x.cols() != p.in_dim()) {
    fail(ErrorKind::kShape, "cheb_conv: X has " + std::to_string(x.cols()) +
                                " columns but W_k expects " + std::to_string(p.in_dim()));
  }
}

Mat add_bias_activate(Mat y, const Vec& bias, Activation act) {
  y.rowwise() += bias.transpose();
  if (act == Activation::kRelu) y = y.cwiseMax(0.0);
  return y;
}

}  // namespace

Mat cheb_conv(const Mat& x, const GraphOperator& g, const ChebLayerParams& p, Activation act) {
  check_operands(x, g, p);
  Mat y = x * p.weights[0];
  Mat prev = x;
  Mat cur;
  for (int k = 1; k <= p.order(); ++k) {
    Mat next = k == 1 ? Mat(g.rescaled * x) : Mat(2.0 * g.rescaled * cur - prev);
    if (k > 1) prev = std::move(cur);
    cur = std::move(next);
    y += cur * p.weights[k];
  }
  return add_bias_activate(std::move(y), p.bias, act);
}

Mat cheb_conv_spectral(const Mat& x, const GraphOperator& g, const ChebLayerParams& p,
                       Activation act) {
  check_operands(x, g, p);
  Eigen::SelfAdjointEigenSolver<Mat> eig(g.laplacian);
  const Mat& u = eig.eigenvectors();
  const Vec shifted = eig.eigenvalues().array() - 1.0;
  const Mat ut_x = u.transpose() * x;

  Mat y = Mat::Zero(x.rows(), p.out_dim());
  Vec t_prev = Vec::Ones(shifted.size());
  Vec t_cur = shifted;
  for (int k = 0; k <= p.order(); ++k) {
    Vec coeff;
    if (k == 0) {
      coeff = t_prev;
    } else if (k == 1) {
      coeff = t_cur;
    } else {
      Vec t_next = 2.0 * shifted.cwiseProduct(t_cur) - t_prev;
      t_prev = std::move(t_cur);
      t_cur = std::move(t_next);
      coeff = t_cur;
    }
    y += u * coeff.asDiagonal() * ut_x * p.weights[k];
  }
  return add_bias_activate(std::move(y), p.bias, act);
}

Vec masked_max_pool(const Mat& y, const MaskVector& mask) {
  if (mask.size() != y.rows()) fail(ErrorKind::kShape, "masked_max_pool: mask length mismatch");
  Vec out = Vec::Zero(y.cols());
  bool any = false;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (!mask(i)) continue;
    if (!any) {
      out = y.row(i).transpose();
      any = true;
    } else {
      out = out.cwiseMax(y.row(i).transpose());
    }
  }
  return out;
}

Mat encode_view(const Clip& clip, int offset, int count, const GraphStack& stack, Activation act) {
  if (offset < 0 || count <= 0 || offset + count > clip.nodes()) {
    fail(ErrorKind::kShape, "encode_view: node slice outside clip");
  }
  Mat pooled(clip.frames(), stack.out_dim());
  for (int t = 0; t < clip.frames(); ++t) {
    // Real rows first so the operator's complete block lines up with them.
    Mat x(count, 4);
    MaskVector mask(count);
    int real = 0;
    int pad = 0;
    int n_real = 0;
    for (int i = 0; i < count; ++i) n_real += clip.mask(t, offset + i) ? 1 : 0;
    for (int i = 0; i < count; ++i) {
      const bool is_real = clip.mask(t, offset + i);
      const int row = is_real ? real++ : n_real + pad++;
      x.row(row) = clip.features[t].row(offset + i);
      mask(row) = is_real;
    }
    const GraphOperator g = make_graph_operator(n_real, count);
    Mat h = x;
    for (const auto& layer : stack.layers) h = cheb_conv(h, g, layer, act);
    pooled.row(t) = masked_max_pool(h, mask).transpose();
  }
  return pooled;
}

const Mat& PooledViews::operator[](SuperCategory c) const {
  switch (c) {
    case SuperCategory::kCar: return car;
    case SuperCategory::kPedestrian: return pedestrian;
    case SuperCategory::kTraffic: return traffic;
  }
  return car;
}

PooledViews encode_clip_spatial(const Clip& clip, const std::array<GraphStack, 3>& stacks,
                                const CategoryQuota& quota, Activation act) {
  validate(clip, quota);
  PooledViews out;
  out.car = encode_view(clip, quota.offset(SuperCategory::kCar), quota.n_car, stacks[0], act);
  out.pedestrian = encode_view(clip, quota.offset(SuperCategory::kPedestrian),
                               quota.n_pedestrian, stacks[1], act);
  out.traffic =
      encode_view(clip, quota.offset(SuperCategory::kTraffic), quota.n_traffic, stacks[2], act);
  return out;
}

}  // namespace egospeed
