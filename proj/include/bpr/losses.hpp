#pragma once
// Masked contrastive loss, uniformity loss and their sum. Each loss returns
// its value together with the gradient with respect to its input.

#include "bpr/common.hpp"

#include <vector>

namespace bpr::losses {

// M(i, j) == false removes item j as a negative for query i. The diagonal is
// ignored (positives are always kept).
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct ContrastiveResult {
    double loss = 0.0;
    Matrix dscores;                // d loss / d similarities, B x B
    std::vector<double> row_loss;  // per query, before averaging
    int degenerate_rows = 0;       // rows with no unmasked negative; loss 0
};

// Mean over rows of -log softmax of the diagonal among the diagonal and the
// unmasked off-diagonals, all divided by temperature.
ContrastiveResult contrastive_loss(const Matrix& scores, const Mask& mask, double temperature);

struct UniformityResult {
    double loss = 0.0;
    Matrix dembeddings;  // B x d
};

// log( mean over ordered pairs i != j of exp(-2 |e_i - e_j|^2) ).
UniformityResult uniformity_loss(const Matrix& embeddings);

inline double total_loss(double contrastive, double uniformity, double weight) {
    if (!(weight >= 0.0)) throw ValidationError("uniformity weight must be non-negative");
    return weight == 0.0 ? contrastive : contrastive + weight * uniformity;
}

}  // namespace bpr::losses
