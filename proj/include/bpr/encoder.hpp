#pragma once
// Query-side signal encoder and passage-side text encoder. Both end in an L2
// normalization, so every embedding lies on the unit sphere of width out_dim.

#include "bpr/common.hpp"
#include "bpr/nn.hpp"
#include "bpr/rng.hpp"

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bpr::encoder {

using nn::Pooling;

inline constexpr Index kMaxSequenceLength = 512;

struct EncoderDims {
    Index feature_dim = 64;
    Index model_dim = 32;
    Index out_dim = 32;
    Index layers = 2;
    Index heads = 4;
    double dropout = 0.1;

    void validate() const;
};

enum class Modality { Signal, Text };

struct Embedding {
    RowVector values;
    Modality modality = Modality::Signal;
};

// x (n x F) -> project -> prepend cls -> + sinusoidal positions -> layers
//   -> pool -> output projection -> L2 normalize.
class SignalEncoder {
public:
    nn::Linear input;   // F x d
    Matrix cls;         // 1 x d
    std::vector<nn::TransformerLayer> layers;
    nn::Linear output;  // d x d_out

    struct Cache {
        Matrix x;
        std::vector<nn::TransformerLayer::Cache> layers;
        Matrix final_states;
        double norm = 0.0;
        RowVector unit;
        Pooling pooling = Pooling::Cls;
        RowVector pooled;
    };

    SignalEncoder() = default;
    explicit SignalEncoder(const EncoderDims& dims);

    void init(Rng& rng);
    RowVector forward(const Matrix& x, Pooling pooling, const nn::Mode& mode, Cache& cache) const;
    void backward(const Cache& cache, const RowVector& dembedding, SignalEncoder& grad) const;
    Embedding encode(const Matrix& x, Pooling pooling = Pooling::Cls, const nn::Mode& mode = nn::eval_mode()) const;
    void collect(const std::string& prefix, nn::TensorList& out);

    Index feature_dim() const { return input.weight.rows(); }
    Index model_dim() const { return input.weight.cols(); }
    Index out_dim() const { return output.weight.cols(); }

    static Index parameter_count(const EncoderDims& dims);

private:
    Matrix positions_;
};

// Borrowed view of a token sequence. positions gives each token's index in
// its source passage; empty means 0..n-1.
struct TextInput {
    std::string_view passage_id;
    std::span<const std::string> tokens;
    std::span<const std::size_t> positions;
};

// Frozen token-level text representation: embed() returns (n+1) x width with
// the provider's cls slot in row 0.
class TextProvider {
public:
    virtual ~TextProvider() = default;
    virtual Index width() const = 0;
    virtual Matrix embed(const TextInput& input) const = 0;
    // Context-free per-token vectors, n x width, for text-query encoders.
    virtual Matrix token_vectors(const TextInput& input) const = 0;
};

// Feature-hashed word vectors (seeded unit rows keyed by a hash of the token)
// plus positions, mixed by one frozen random transformer layer. Tokens whose
// truncated hashes collide share a word vector.
class HashedTextProvider final : public TextProvider {
public:
    HashedTextProvider(Index width, Index heads, std::uint64_t seed, int hash_bits = 64);

    Index width() const override { return width_; }
    Matrix embed(const TextInput& input) const override;
    Matrix token_vectors(const TextInput& input) const override;

    std::uint64_t token_hash(std::string_view token) const;
    RowVector word_vector(std::string_view token) const;
    const nn::TransformerLayer& mixing_layer() const { return mixing_; }

private:
    Index width_;
    std::uint64_t seed_;
    int hash_bits_;
    RowVector cls_;
    nn::TransformerLayer mixing_;
    Matrix positions_;
};

// Precomputed token matrices keyed by passage id, read from a "BPRE"
// container: u32 version=1, u64 count, then per entry u16+pid, u32 rows,
// u32 width, rows*width float32. Row 0 is the cls slot, row i+1 token i.
class FileTextProvider final : public TextProvider {
public:
    explicit FileTextProvider(std::map<std::string, FloatMatrix> entries);
    static FileTextProvider load(const std::string& path);

    Index width() const override { return width_; }
    Matrix embed(const TextInput& input) const override;
    Matrix token_vectors(const TextInput& input) const override;

private:
    const FloatMatrix& entry(std::string_view passage_id) const;
    std::map<std::string, FloatMatrix, std::less<>> entries_;
    Index width_ = 0;
};

std::vector<char> encode_embedding_file(const std::map<std::string, FloatMatrix>& entries);
std::map<std::string, FloatMatrix> decode_embedding_file(std::vector<char> bytes);

// Trainable passage head: P1 = adapter(P0) + residual_norm(P0), then pool and
// normalize. The adapter block has no identity skip; residual_norm is the
// skip path.
class PassageAdapter {
public:
    nn::TransformerLayer layer;
    nn::LayerNorm residual_norm;

    struct Cache {
        nn::TransformerLayer::Cache layer;
        nn::LayerNorm::Cache norm;
        Matrix states;
        Pooling pooling = Pooling::Cls;
        double norm_value = 0.0;
        RowVector unit;
    };

    PassageAdapter() = default;
    PassageAdapter(Index width, Index heads);

    void init(Rng& rng);
    RowVector forward(const Matrix& p0, Pooling pooling, const nn::Mode& mode, Cache& cache) const;
    void backward(const Cache& cache, const RowVector& dembedding, PassageAdapter& grad) const;
    void collect(const std::string& prefix, nn::TensorList& out);

    static Index parameter_count(Index width) { return nn::TransformerLayer::parameter_count(width) + 2 * width; }
};

Embedding encode_text_passage(const TextInput& input, const TextProvider& provider, const PassageAdapter& adapter,
                              Pooling pooling = Pooling::Cls, const nn::Mode& mode = nn::eval_mode());

}  // namespace bpr::encoder
