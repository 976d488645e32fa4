#include "bpr/losses.hpp"

#include <cmath>
#include <limits>

namespace bpr::losses {

ContrastiveResult contrastive_loss(const Matrix& scores, const Mask& mask, double temperature) {
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    const Index b = scores.rows();
    if (b < 1 || scores.cols() != b) throw ValidationError("contrastive loss needs a square score matrix");
    if (mask.rows() != b || mask.cols() != b) throw ValidationError("mask shape does not match scores");

    ContrastiveResult r;
    r.dscores = Matrix::Zero(b, b);
    r.row_loss.assign(static_cast<std::size_t>(b), 0.0);
    for (Index i = 0; i < b; ++i) {
        double top = scores(i, i) / temperature;
        int negatives = 0;
        for (Index j = 0; j < b; ++j) {
            if (j == i || !mask(i, j)) continue;
            ++negatives;
            top = std::max(top, scores(i, j) / temperature);
        }
        if (negatives == 0) {
            ++r.degenerate_rows;
            continue;
        }
        double sum = 0.0;
        for (Index j = 0; j < b; ++j) {
            if (j == i || mask(i, j)) sum += std::exp(scores(i, j) / temperature - top);
        }
        const double log_z = top + std::log(sum);
        const double loss = log_z - scores(i, i) / temperature;
        r.row_loss[static_cast<std::size_t>(i)] = loss;
        r.loss += loss;
        for (Index j = 0; j < b; ++j) {
            if (j != i && !mask(i, j)) continue;
            const double p = std::exp(scores(i, j) / temperature - log_z);
            r.dscores(i, j) = (p - (i == j ? 1.0 : 0.0)) / (temperature * static_cast<double>(b));
        }
    }
    r.loss /= static_cast<double>(b);
    return r;
}

UniformityResult uniformity_loss(const Matrix& e) {
    const Index b = e.rows();
    if (b < 2) throw ValidationError("uniformity loss needs at least two embeddings");
    Matrix logits = Matrix::Zero(b, b);
    double top = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < b; ++i) {
        for (Index j = 0; j < b; ++j) {
            if (i == j) continue;
            logits(i, j) = -2.0 * (e.row(i) - e.row(j)).squaredNorm();
            top = std::max(top, logits(i, j));
        }
    }
    double sum = 0.0;
    for (Index i = 0; i < b; ++i)
        for (Index j = 0; j < b; ++j)
            if (i != j) sum += std::exp(logits(i, j) - top);

    UniformityResult r;
    const double log_z = top + std::log(sum);
    r.loss = log_z - std::log(static_cast<double>(b) * static_cast<double>(b - 1));
    r.dembeddings = Matrix::Zero(b, e.cols());
    for (Index i = 0; i < b; ++i) {
        for (Index j = 0; j < b; ++j) {
            if (i == j) continue;
            const double w = std::exp(logits(i, j) - log_z) + std::exp(logits(j, i) - log_z);
            r.dembeddings.row(i) -= 4.0 * w * (e.row(i) - e.row(j));
        }
    }
    return r;
}

}  // namespace bpr::losses
