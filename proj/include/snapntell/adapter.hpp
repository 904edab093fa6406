#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"
#include "index.hpp"

namespace snt::adapter {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class Profile { Production, Test };

struct AdapterConfig {
    int n_latents = 64;
    int d_text = 32;
    int d_img = 16;
    int n_patches = 49;
    int vocab = 32;
    int n_layers = 1;
    Profile profile = Profile::Production;

    /// Production profile admits 64..256 latents; the test profile any 4..256.
    void validate() const {
        int lo = profile == Profile::Production ? 64 : 4;
        if (n_latents < lo || n_latents > 256)
            throw Error(ErrorKind::ShapeMismatch, "n_latents " + std::to_string(n_latents) +
                                                      " outside [" + std::to_string(lo) + ", 256]");
        if (d_text <= 0 || d_img <= 0 || n_patches <= 0 || vocab <= 0 || n_layers <= 0)
            throw Error(ErrorKind::ShapeMismatch, "adapter dimensions must be positive");
    }

    friend bool operator==(const AdapterConfig&, const AdapterConfig&) = default;
};

/// One cross-attention block: latent queries attend over image features.
struct ResamplerLayer {
    Matrix w_q, w_k, w_v; // d_img x d_img
};

/// Trainable adapter state: learned latent queries, the attention blocks and
/// the output projection into the text embedding space.
struct AdapterParams {
    AdapterConfig config;
    Matrix latents; // n_latents x d_img
    std::vector<ResamplerLayer> layers;
    Matrix w_out; // d_img x d_text

    /// Seeded uniform(-scale, scale) initialization.
    static AdapterParams init(const AdapterConfig& cfg, std::uint64_t seed, double scale = 0.05) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-scale, scale);
        auto draw = [&](int r, int c) {
            Matrix m(r, c);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
            return m;
        };
        AdapterParams p;
        p.config = cfg;
        p.latents = draw(cfg.n_latents, cfg.d_img);
        for (int l = 0; l < cfg.n_layers; ++l)
            p.layers.push_back({draw(cfg.d_img, cfg.d_img), draw(cfg.d_img, cfg.d_img),
                                draw(cfg.d_img, cfg.d_img)});
        p.w_out = draw(cfg.d_img, cfg.d_text);
        return p;
    }

    /// Visits every trainable matrix in a fixed order (the checkpoint order).
    template <typename Self, typename Fn>
    static void visit(Self& self, Fn&& fn) {
        fn(self.latents);
        for (auto& layer : self.layers) {
            fn(layer.w_q);
            fn(layer.w_k);
            fn(layer.w_v);
        }
        fn(self.w_out);
    }
    template <typename Fn> void for_each_matrix(Fn&& fn) { visit(*this, fn); }
    template <typename Fn> void for_each_matrix(Fn&& fn) const { visit(*this, fn); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_matrix([&](const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
        return n;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_matrix([&](const Matrix& m) { ok = ok && m.allFinite(); });
        return ok;
    }

    /// Zero-valued parameters with the same shapes; used as a gradient buffer.
    AdapterParams zeros_like() const {
        AdapterParams z = *this;
        z.for_each_matrix([](Matrix& m) { m.setZero(); });
        return z;
    }

    void check_shapes() const {
        config.validate();
        auto expect = [](const Matrix& m, int r, int c, const char* what) {
            if (m.rows() != r || m.cols() != c)
                throw Error(ErrorKind::ShapeMismatch, std::string(what) + " has shape " +
                                                          std::to_string(m.rows()) + "x" +
                                                          std::to_string(m.cols()));
        };
        const auto& c = config;
        expect(latents, c.n_latents, c.d_img, "latents");
        if (static_cast<int>(layers.size()) != c.n_layers)
            throw Error(ErrorKind::ShapeMismatch, "layer count does not match config");
        for (const auto& l : layers) {
            expect(l.w_q, c.d_img, c.d_img, "w_q");
            expect(l.w_k, c.d_img, c.d_img, "w_k");
            expect(l.w_v, c.d_img, c.d_img, "w_v");
        }
        expect(w_out, c.d_img, c.d_text, "w_out");
    }
};

/// Output of the (external) image encoder: one row per patch.
struct EncodedImage {
    Matrix features; // n_patches x d_img
};

/// Frozen language-model stand-in: an embedding table and an output projection.
struct FrozenLmStub {
    Matrix embedding; // vocab x d_text
    Matrix output;    // d_text x vocab

    static FrozenLmStub random(int vocab, int d_text, std::uint64_t seed, double scale = 1.0) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-scale, scale);
        FrozenLmStub lm{Matrix(vocab, d_text), Matrix(d_text, vocab)};
        for (Eigen::Index i = 0; i < lm.embedding.size(); ++i) lm.embedding.data()[i] = dist(rng);
        for (Eigen::Index i = 0; i < lm.output.size(); ++i) lm.output.data()[i] = dist(rng);
        return lm;
    }

    int vocab() const noexcept { return static_cast<int>(embedding.rows()); }
    int d_text() const noexcept { return static_cast<int>(embedding.cols()); }
};

/// Row-wise softmax, max-shifted.
inline Matrix softmax_rows(const Matrix& s) {
    Matrix out(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        double mx = s.row(r).maxCoeff();
        auto e = (s.row(r).array() - mx).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

namespace detail {

struct LayerTrace {
    Matrix input; // queries source (latents for the first layer)
    Matrix q, k, v, attn;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    Matrix resampled; // output of the last block, n_latents x d_img
    Matrix tokens;    // n_latents x d_text
};

inline void check_image(const AdapterParams& params, const EncodedImage& img) {
    if (img.features.rows() < 1 || img.features.cols() != params.config.d_img)
        throw Error(ErrorKind::ShapeMismatch,
                    "features must be n_patches x " + std::to_string(params.config.d_img));
    if (!img.features.allFinite())
        throw Error(ErrorKind::NonFiniteInput, "image features contain NaN or Inf");
}

inline ForwardTrace forward(const AdapterParams& params, const Matrix& features) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.config.d_img));
    ForwardTrace t;
    Matrix x = params.latents;
    for (const auto& layer : params.layers) {
        LayerTrace lt;
        lt.input = x;
        lt.q = x * layer.w_q;
        lt.k = features * layer.w_k;
        lt.v = features * layer.w_v;
        lt.attn = softmax_rows((lt.q * lt.k.transpose()) * inv_sqrt_d);
        x = lt.attn * lt.v;
        t.layers.push_back(std::move(lt));
    }
    t.resampled = std::move(x);
    t.tokens = t.resampled * params.w_out;
    return t;
}

inline void check_text(const FrozenLmStub& lm, std::span<const int> token_ids, int d_text) {
    if (token_ids.empty()) throw Error(ErrorKind::EmptyText, "token sequence is empty");
    if (lm.d_text() != d_text || lm.output.rows() != d_text || lm.output.cols() != lm.vocab())
        throw Error(ErrorKind::ShapeMismatch, "language model stub does not match d_text");
    for (int id : token_ids)
        if (id < 0 || id >= lm.vocab())
            throw Error(ErrorKind::ShapeMismatch, "token id " + std::to_string(id) +
                                                      " outside vocabulary");
}

/// Teacher-forced NLL over mean-pooled context. Position i conditions on the
/// modality tokens plus the embeddings of tokens [0, i). When `grad_tokens`
/// is given it receives dNLL/dtokens.
inline double pooled_nll(const Matrix& tokens, const FrozenLmStub& lm,
                         std::span<const int> token_ids, Matrix* grad_tokens) {
    const auto m = tokens.rows();
    RowVector token_sum = tokens.colwise().sum();
    RowVector prefix_sum = RowVector::Zero(tokens.cols());
    RowVector grad_row = RowVector::Zero(tokens.cols());
    double nll = 0.0;
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        double count = static_cast<double>(m + static_cast<Eigen::Index>(i));
        RowVector context = (token_sum + prefix_sum) / count;
        RowVector logits = context * lm.output;
        double mx = logits.maxCoeff();
        double lse = mx + std::log((logits.array() - mx).exp().sum());
        int target = token_ids[i];
        nll += lse - logits(target);
        if (grad_tokens) {
            RowVector p = (logits.array() - lse).exp();
            p(target) -= 1.0;
            grad_row += (p * lm.output.transpose()) / count;
        }
        prefix_sum += lm.embedding.row(target);
    }
    if (grad_tokens) *grad_tokens = Matrix::Ones(m, 1) * grad_row;
    return nll;
}

} // namespace detail

/// Resampler projection: each block computes softmax(QK^T / sqrt(d_img)) V
/// with the previous block's output as queries; the result is projected to
/// n_latents x d_text modality tokens.
inline Matrix project(const AdapterParams& params, const EncodedImage& img) {
    params.check_shapes();
    detail::check_image(params, img);
    return detail::forward(params, img.features).tokens;
}

/// Attention weights of every block, for inspection.
inline std::vector<Matrix> attention_maps(const AdapterParams& params, const EncodedImage& img) {
    params.check_shapes();
    detail::check_image(params, img);
    std::vector<Matrix> out;
    for (auto& lt : detail::forward(params, img.features).layers) out.push_back(std::move(lt.attn));
    return out;
}

inline double teacher_forced_nll(const AdapterParams& params, const FrozenLmStub& lm,
                                 const EncodedImage& img, std::span<const int> token_ids) {
    params.check_shapes();
    detail::check_image(params, img);
    detail::check_text(lm, token_ids, params.config.d_text);
    auto trace = detail::forward(params, img.features);
    return detail::pooled_nll(trace.tokens, lm, token_ids, nullptr);
}

/// NLL and its exact gradient with respect to every adapter parameter.
inline double nll_and_gradient(const AdapterParams& params, const FrozenLmStub& lm,
                               const EncodedImage& img, std::span<const int> token_ids,
                               AdapterParams& grad) {
    params.check_shapes();
    detail::check_image(params, img);
    detail::check_text(lm, token_ids, params.config.d_text);

    const Matrix& f = img.features;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.config.d_img));
    auto trace = detail::forward(params, f);

    Matrix g_tokens;
    double nll = detail::pooled_nll(trace.tokens, lm, token_ids, &g_tokens);

    grad = params.zeros_like();
    grad.w_out = trace.resampled.transpose() * g_tokens;
    Matrix g_x = g_tokens * params.w_out.transpose();

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& lt = trace.layers[li];
        const auto& layer = params.layers[li];
        Matrix g_attn = g_x * lt.v.transpose();
        Matrix g_v = lt.attn.transpose() * g_x;
        // softmax backward, row by row
        Eigen::VectorXd dots = (g_attn.array() * lt.attn.array()).rowwise().sum();
        Matrix g_scores = lt.attn.array() * (g_attn.colwise() - dots).array();
        g_scores *= inv_sqrt_d;
        Matrix g_q = g_scores * lt.k;
        Matrix g_k = g_scores.transpose() * lt.q;

        grad.layers[li].w_q = lt.input.transpose() * g_q;
        grad.layers[li].w_k = f.transpose() * g_k;
        grad.layers[li].w_v = f.transpose() * g_v;
        g_x = g_q * layer.w_q.transpose();
    }
    grad.latents = g_x;
    return nll;
}

/// Max over all adapter parameters of |analytic - numeric| / max(1e-8, |numeric|),
/// numeric being the central difference with step h.
inline double grad_check(const AdapterParams& params, const FrozenLmStub& lm,
                         const EncodedImage& img, std::span<const int> token_ids, double h) {
    if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "step size must be positive");
    AdapterParams analytic;
    nll_and_gradient(params, lm, img, token_ids, analytic);

    AdapterParams probe = params;
    std::vector<Matrix*> probe_mats;
    probe.for_each_matrix([&](Matrix& m) { probe_mats.push_back(&m); });
    std::vector<const Matrix*> grad_mats;
    analytic.for_each_matrix([&](const Matrix& m) { grad_mats.push_back(&m); });

    double worst = 0.0;
    for (std::size_t mi = 0; mi < probe_mats.size(); ++mi) {
        Matrix& m = *probe_mats[mi];
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            double saved = m.data()[i];
            m.data()[i] = saved + h;
            double up = teacher_forced_nll(probe, lm, img, token_ids);
            m.data()[i] = saved - h;
            double down = teacher_forced_nll(probe, lm, img, token_ids);
            m.data()[i] = saved;
            double numeric = (up - down) / (2.0 * h);
            double err = std::abs(grad_mats[mi]->data()[i] - numeric) /
                         std::max(1e-8, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

struct TrainingExample {
    EncodedImage image;
    std::vector<int> token_ids;
};

struct TrainResult {
    AdapterParams params;
    std::vector<double> loss_trace; // mean loss before each step
    double final_loss = 0.0;        // mean loss after the last step
};

inline double dataset_loss(const AdapterParams& params, const FrozenLmStub& lm,
                           std::span<const TrainingExample> data) {
    double total = 0.0;
    for (const auto& ex : data) total += teacher_forced_nll(params, lm, ex.image, ex.token_ids);
    return total / static_cast<double>(data.size());
}

/// Full-batch gradient descent on the adapter only. The language model is
/// taken by const reference and never written.
inline TrainResult train_adapter(AdapterParams params, const FrozenLmStub& lm,
                                 std::span<const TrainingExample> data, int steps, double lr) {
    if (data.empty()) throw Error(ErrorKind::InvalidArgument, "training set is empty");
    if (!(lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
    if (steps < 0) throw Error(ErrorKind::InvalidArgument, "steps must be non-negative");

    TrainResult out;
    out.loss_trace.reserve(static_cast<std::size_t>(steps));
    const double scale = 1.0 / static_cast<double>(data.size());
    AdapterParams grad_sum = params.zeros_like();
    AdapterParams grad;

    for (int step = 0; step < steps; ++step) {
        grad_sum.for_each_matrix([](Matrix& m) { m.setZero(); });
        double loss = 0.0;
        for (const auto& ex : data) {
            loss += nll_and_gradient(params, lm, ex.image, ex.token_ids, grad);
            std::vector<Matrix*> acc;
            grad_sum.for_each_matrix([&](Matrix& m) { acc.push_back(&m); });
            std::size_t i = 0;
            grad.for_each_matrix([&](const Matrix& g) { *acc[i++] += g; });
        }
        loss *= scale;
        if (!std::isfinite(loss))
            throw Error(ErrorKind::DivergenceDetected,
                        "loss became non-finite at step " + std::to_string(step));
        out.loss_trace.push_back(loss);

        std::vector<const Matrix*> g;
        grad_sum.for_each_matrix([&](const Matrix& m) { g.push_back(&m); });
        std::size_t i = 0;
        params.for_each_matrix([&](Matrix& p) { p -= (lr * scale) * *g[i++]; });
    }
    out.final_loss = dataset_loss(params, lm, data);
    if (!std::isfinite(out.final_loss))
        throw Error(ErrorKind::DivergenceDetected, "loss became non-finite after training");
    out.params = std::move(params);
    return out;
}

// Checkpoint: "SNTADP01", u32 version, u32 n_latents, d_text, d_img,
// n_patches, vocab, n_layers, then every matrix row-major as f64 LE in
// for_each_matrix order.
inline constexpr std::string_view kCheckpointMagic = "SNTADP01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const AdapterParams& params, const std::filesystem::path& path) {
    params.check_shapes();
    snt::detail::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.le(kCheckpointVersion);
    const auto& c = params.config;
    for (int v : {c.n_latents, c.d_text, c.d_img, c.n_patches, c.vocab, c.n_layers})
        w.le(static_cast<std::uint32_t>(v));
    params.for_each_matrix([&](const Matrix& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) w.le(std::bit_cast<std::uint64_t>(m.data()[i]));
    });
    snt::detail::write_file(path, w.buffer());
}

inline AdapterParams load_checkpoint(const std::filesystem::path& path,
                                     Profile profile = Profile::Test) {
    std::string data = snt::detail::read_file(path);
    snt::detail::ByteReader r(data);
    if (!r.has(kCheckpointMagic.size() + 28) || r.bytes(kCheckpointMagic.size()) != kCheckpointMagic)
        throw Error(ErrorKind::CorruptHeader, "bad adapter checkpoint magic");
    if (r.le<std::uint32_t>() != kCheckpointVersion)
        throw Error(ErrorKind::CorruptHeader, "unsupported adapter checkpoint version");
    AdapterConfig c;
    c.n_latents = static_cast<int>(r.le<std::uint32_t>());
    c.d_text = static_cast<int>(r.le<std::uint32_t>());
    c.d_img = static_cast<int>(r.le<std::uint32_t>());
    c.n_patches = static_cast<int>(r.le<std::uint32_t>());
    c.vocab = static_cast<int>(r.le<std::uint32_t>());
    c.n_layers = static_cast<int>(r.le<std::uint32_t>());
    c.profile = profile;
    c.validate();
    auto params = AdapterParams::init(c, 0, 0.0);
    params.for_each_matrix([&](Matrix& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = std::bit_cast<double>(r.le<std::uint64_t>());
    });
    if (r.remaining() != 0) throw Error(ErrorKind::CorruptHeader, "trailing checkpoint bytes");
    return params;
}

/// Toy dataset JSONL rows: {"features": [[...], ...], "token_ids": [...]}.
inline std::vector<TrainingExample> load_toy_dataset(const std::filesystem::path& path) {
    std::vector<TrainingExample> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        try {
            auto rows = j.at("features").get<std::vector<std::vector<double>>>();
            if (rows.empty()) throw Error(ErrorKind::ShapeMismatch, "features are empty");
            Matrix f(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(rows.front().size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != rows.front().size())
                    throw Error(ErrorKind::ShapeMismatch, "ragged feature rows");
                for (std::size_t c = 0; c < rows[r].size(); ++c)
                    f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            }
            out.push_back({EncodedImage{std::move(f)}, j.at("token_ids").get<std::vector<int>>()});
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    });
    return out;
}

} // namespace snt::adapter
