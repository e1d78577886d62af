#pragma once

#include <span>
#include <vector>

#include "egospeed/sequence_model.hpp"

namespace egospeed {

// Batched evaluation of the model used by training and evaluation.
//
// Clips of a batch are stacked so every dense product runs as one matrix
// multiply. The rescaled Laplacian of a complete-plus-isolated graph is
// applied in closed form: real rows receive minus the mean of the real rows,
// padded rows are negated.

using ClipBatch = std::span<const Clip* const>;

// B x 4 logits.
Mat batch_logits(ClipBatch batch, const ModelParams& params);

// Per-clip input gradients: [clip][frame] -> N x 4.
using InputGradients = std::vector<std::vector<Mat>>;

// Mean cross-entropy of the batch and its exact gradient with respect to
// every parameter (written into `grads`, which is resized as needed).
// Max-pool subgradients go to the lowest-index maximizing row.
double batch_loss_and_gradient(ClipBatch batch, const ModelParams& params, GradientSet& grads,
                               InputGradients* input_grads = nullptr);

// Mean cross-entropy without gradients.
double batch_loss(ClipBatch batch, const ModelParams& params);

std::vector<const Clip*> pointers(std::span<const Clip> clips);

// rescaled-Laplacian product for one block, given the row mask. Exposed for
// cross-checking against the dense GraphOperator.
Mat apply_rescaled_laplacian(const Mat& x, const MaskVector& mask);

}  // namespace egospeed
