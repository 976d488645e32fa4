#pragma once
// Transformer building blocks with explicit forward caches and analytic
// backward passes. Sequences are matrices with one row per position.
//
// Gradient accumulators are instances of the same parameter structs; every
// backward() adds into them, so a batch is accumulated by calling backward()
// once per item in a fixed order.

#include "bpr/common.hpp"
#include "bpr/rng.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace bpr::nn {

struct NamedTensor {
    std::string name;
    Matrix* tensor;
    bool decay;  // receives decoupled weight decay
};
using TensorList = std::vector<NamedTensor>;

struct Mode {
    bool training = false;
    double dropout = 0.0;
    Rng* rng = nullptr;

    bool dropout_active() const { return training && dropout > 0.0; }
};

inline Mode eval_mode() { return {}; }

// Inverted dropout mask: entries are 0 or 1/(1-rate); all ones when inactive.
Matrix dropout_mask(Index rows, Index cols, const Mode& mode);

struct Linear {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out

    Linear() = default;
    Linear(Index in, Index out) : weight(Matrix::Zero(in, out)), bias(Matrix::Zero(1, out)) {}

    void init(Rng& rng);
    Matrix forward(const Matrix& x) const;
    Matrix backward(const Matrix& x, const Matrix& dy, Linear& grad) const;
    void collect(const std::string& prefix, TensorList& out);
};

struct LayerNorm {
    static constexpr double kEps = 1e-5;
    Matrix gain;  // 1 x width
    Matrix bias;  // 1 x width

    struct Cache {
        Matrix xhat;
        Eigen::VectorXd inv_std;
    };

    LayerNorm() = default;
    explicit LayerNorm(Index width) : gain(Matrix::Ones(1, width)), bias(Matrix::Zero(1, width)) {}

    Matrix forward(const Matrix& x, Cache& cache) const;
    Matrix backward(const Cache& cache, const Matrix& dy, LayerNorm& grad) const;
    void collect(const std::string& prefix, TensorList& out);
};

struct MultiHeadAttention {
    Linear query, key, value, output;
    Index heads = 1;

    struct Cache {
        Matrix x, q, k, v, concat;
        std::vector<Matrix> probs;  // softmax weights per head
        std::vector<Matrix> masks;  // dropout on the weights
    };

    MultiHeadAttention() = default;
    MultiHeadAttention(Index width, Index heads);

    void init(Rng& rng);
    Matrix forward(const Matrix& x, const Mode& mode, Cache& cache) const;
    Matrix backward(const Cache& cache, const Matrix& dy, MultiHeadAttention& grad) const;
    void collect(const std::string& prefix, TensorList& out);
};

struct FeedForward {
    static constexpr Index kExpansion = 4;
    Linear expand, contract;

    struct Cache {
        Matrix x, pre, act, mask;
    };

    FeedForward() = default;
    explicit FeedForward(Index width) : expand(width, kExpansion * width), contract(kExpansion * width, width) {}

    void init(Rng& rng);
    Matrix forward(const Matrix& x, const Mode& mode, Cache& cache) const;
    Matrix backward(const Cache& cache, const Matrix& dy, FeedForward& grad) const;
    void collect(const std::string& prefix, TensorList& out);
};

// Pre-norm block:
//   r = x + attn(norm1(x));  y = skip*x + attn(...) + ffn(norm2(r))
// With identity_skip the output is the usual r + ffn(norm2(r)); without it
// only the two residual branches are returned, so zero weights give zero.
struct TransformerLayer {
    LayerNorm norm1;
    MultiHeadAttention attention;
    LayerNorm norm2;
    FeedForward ffn;
    bool identity_skip = true;

    struct Cache {
        LayerNorm::Cache norm1, norm2;
        MultiHeadAttention::Cache attention;
        FeedForward::Cache ffn;
    };

    TransformerLayer() = default;
    TransformerLayer(Index width, Index heads, bool identity_skip = true);

    void init(Rng& rng);
    Matrix forward(const Matrix& x, const Mode& mode, Cache& cache) const;
    Matrix backward(const Cache& cache, const Matrix& dy, TransformerLayer& grad) const;
    void collect(const std::string& prefix, TensorList& out);

    static Index parameter_count(Index width) { return 12 * width * width + 13 * width; }
};

// Fixed sinusoidal table, rows x width.
Matrix sinusoidal_positions(Index rows, Index width);

enum class Pooling { Cls, Mean, Max };
Pooling parse_pooling(std::string_view s);
std::string to_string(Pooling p);

// Row 0 is the cls position; mean and max reduce over rows 1..n-1.
RowVector pool_sequence(const Matrix& m, Pooling strategy);
Matrix pool_backward(const Matrix& m, Pooling strategy, const RowVector& dpooled);

RowVector l2_normalize(const RowVector& v, double& norm);
RowVector l2_normalize_backward(const RowVector& unit, double norm, const RowVector& dunit);

template <class Params>
Params zeros_like(const Params& params) {
    Params g = params;
    TensorList list;
    g.collect("", list);
    for (auto& t : list) t.tensor->setZero();
    return g;
}

}  // namespace bpr::nn
