#pragma once

#include <array>
#include <vector>

#include "egospeed/data_ingest.hpp"

namespace egospeed {

enum class Activation { kIdentity, kRelu };

inline double activate(Activation a, double x) {
  return a == Activation::kRelu ? (x > 0 ? x : 0.0) : x;
}

// Dense operator for one object-relation graph.
//
// Real nodes form a complete graph with self-loops; padded nodes are
// isolated and only carry their own self-loop, so every degree is positive.
// rescaled = laplacian - I has its spectrum in [-1, 1].
struct GraphOperator {
  Eigen::Index n = 0;
  Mat adjacency;
  Mat degree;
  Mat laplacian;
  Mat rescaled;

  static GraphOperator from_adjacency(const Mat& adjacency);
};

// Top-left n_real block all ones, padded nodes get a lone diagonal one.
Mat build_adjacency(Eigen::Index n_real, Eigen::Index n_total);

// I - D^-1/2 A D^-1/2 with D the row-sum degree.
Mat normalized_laplacian(const Mat& adjacency);

GraphOperator make_graph_operator(Eigen::Index n_real, Eigen::Index n_total);

// One K-hop Chebyshev filter: Y = act(sum_k T_k(L~) X W_k + 1 b^T).
struct ChebLayerParams {
  std::vector<Mat> weights;  // K + 1 entries, each in_dim x out_dim
  Vec bias;                  // out_dim

  int order() const { return static_cast<int>(weights.size()) - 1; }
  Eigen::Index in_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  Eigen::Index out_dim() const { return bias.size(); }
  void validate() const;
};

Mat cheb_conv(const Mat& x, const GraphOperator& g, const ChebLayerParams& p, Activation act);

// Same filter evaluated through the eigendecomposition L = U diag(lambda) U^T:
// sum_k U T_k(diag(lambda) - I) U^T X W_k. Used to cross-check cheb_conv.
Mat cheb_conv_spectral(const Mat& x, const GraphOperator& g, const ChebLayerParams& p,
                       Activation act);

// Column-wise max over rows with mask = true; zero vector when none are.
Vec masked_max_pool(const Mat& y, const MaskVector& mask);

// Stack of Chebyshev layers for one graph view (two layers: 16 then 32).
struct GraphStack {
  std::vector<ChebLayerParams> layers;
  Eigen::Index out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
};

// Runs a graph stack over each frame of one view and pools into T x d.
// `offset`/`count` select the view's node slots in the clip frames.
Mat encode_view(const Clip& clip, int offset, int count, const GraphStack& stack, Activation act);

struct PooledViews {
  Mat car;
  Mat pedestrian;
  Mat traffic;

  const Mat& operator[](SuperCategory c) const;
};

PooledViews encode_clip_spatial(const Clip& clip, const std::array<GraphStack, 3>& stacks,
                                const CategoryQuota& quota, Activation act);

}  // namespace egospeed
