#pragma once

#include "devstab/image.hpp"
#include "devstab/losses.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace devstab {

/// Conv stack ([conv3x3, relu, maxpool2] per entry of conv_channels) -> flatten ->
/// dense+relu embedding -> dense logits.
struct Architecture {
    int input_size = 32;
    std::vector<int> conv_channels{16, 32};
    int embed_dim = 64;
    int classes = 10;

    static Architecture reference(int classes);

    int conv_layers() const { return static_cast<int>(conv_channels.size()); }
    int layer_in_channels(int layer) const { return layer == 0 ? 3 : conv_channels[layer - 1]; }
    /// Spatial size at the input of conv layer `layer` (== input_size >> layer).
    int layer_size(int layer) const { return input_size >> layer; }
    int flat_size() const;
    std::size_t parameter_count() const;

    /// Throws InvalidArgument on impossible shapes.
    void validate() const;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// All trainable weights in one flat buffer with a fixed layout:
/// per conv layer [weights (out, in, 3, 3), bias], then embed [weights (embed, flat), bias],
/// then out [weights (classes, embed), bias].
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(Architecture arch);

    const Architecture& arch() const { return arch_; }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> conv_weights(int layer);
    std::span<const double> conv_weights(int layer) const;
    std::span<double> conv_bias(int layer);
    std::span<const double> conv_bias(int layer) const;
    std::span<double> embed_weights();
    std::span<const double> embed_weights() const;
    std::span<double> embed_bias();
    std::span<const double> embed_bias() const;
    std::span<double> out_weights();
    std::span<const double> out_weights() const;
    std::span<double> out_bias();
    std::span<const double> out_bias() const;

    bool all_finite() const;
    bool same_shape(const ModelParams& other) const { return arch_ == other.arch_; }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    struct Block {
        std::size_t offset = 0;
        std::size_t size = 0;
        friend bool operator==(const Block&, const Block&) = default;
    };

    std::span<double> block(const Block& b) { return std::span<double>(values_).subspan(b.offset, b.size); }
    std::span<const double> block(const Block& b) const {
        return std::span<const double>(values_).subspan(b.offset, b.size);
    }

    Architecture arch_;
    std::vector<double> values_;
    std::vector<Block> conv_w_, conv_b_;
    Block embed_w_, embed_b_, out_w_, out_b_;
};

/// He-uniform fan-in initialisation, zero biases.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

struct ForwardResult {
    std::vector<double> logits;
    std::vector<double> probabilities;
    std::vector<double> embedding; ///< input to the output layer
};

enum class Exec { serial, parallel };

/// Bilinear resize to the model's input size (no crop).
ImageTensor preprocess(const ImageTensor& img, const Architecture& arch);

/// Throws InvalidArgument unless img is arch.input_size square.
ForwardResult forward(const ModelParams& params, const ImageTensor& img, Exec exec = Exec::serial);
std::vector<ForwardResult> forward_batch(const ModelParams& params, std::span<const ImageTensor> images,
                                         Exec exec = Exec::parallel);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

/// -log(max(p[target], kLogFloor)).
double cross_entropy(std::span<const double> probs, int target);

struct TrainExample {
    const ImageTensor* image = nullptr;
    const ImageTensor* counterpart = nullptr; ///< required when alpha > 0
    int target = 0;
};

struct GradientResult {
    ModelParams grad;      ///< gradient of the mean batch loss
    double loss = 0.0;     ///< mean L
    double l0 = 0.0;       ///< mean cross-entropy on the clean images
    double ls = 0.0;       ///< mean stability term (before alpha)
};

/// Reverse-mode gradient of mean_b [ L0(x_b) + alpha * Ls(x_b, x'_b) ], differentiating
/// through both the clean and the counterpart branch. Per-example gradients are
/// reduced in batch order regardless of `exec`.
GradientResult gradient(const ModelParams& params, std::span<const TrainExample> batch, const LossConfig& loss,
                        Exec exec = Exec::parallel);

/// Loss only, same definition as gradient().loss.
double batch_loss(const ModelParams& params, std::span<const TrainExample> batch, const LossConfig& loss);

struct SgdResult {
    ModelParams params;
    std::vector<double> velocity;
};

/// Classical momentum: v = momentum * v + g; params = params - learning_rate * v.
/// An empty velocity is treated as zero.
SgdResult sgd_step(const ModelParams& params, const ModelParams& grads, std::span<const double> velocity,
                   double learning_rate, double momentum);

/// Descending confidence, ties broken by ascending class index.
std::vector<std::pair<int, double>> predict_topk(std::span<const double> probs, int k);

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.bin holds little-endian float32 values, <stem>.json the layout.

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const std::string& stem);
/// Accepts the stem, the .bin or the .json path.
ModelParams load_checkpoint(const std::string& path);
/// Values rounded through float32, as a save/load cycle would.
ModelParams round_to_checkpoint_precision(const ModelParams& params);
/// MD5 hex of the serialized float32 buffer.
std::string checkpoint_digest(const ModelParams& params);

} // namespace devstab
