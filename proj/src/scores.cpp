#include "scorematch/scores.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "scorematch/numeric_io.hpp"
#include "scorematch/rng.hpp"

namespace scorematch {

std::string score_kind_name(ScoreKind kind) {
    switch (kind) {
        case ScoreKind::raw_x: return "raw_x";
        case ScoreKind::pca: return "pca";
        case ScoreKind::logreg_ps: return "logreg_ps";
        case ScoreKind::nn_layer: return "nn_layer";
        case ScoreKind::nn_ps: return "nn_ps";
        case ScoreKind::random_noise: return "random_noise";
    }
    return "?";
}

Matrix ScoreProvider::score(const Matrix& x) const {
    // The noise provider ignores covariates entirely, so any width passes.
    if (kind_ != ScoreKind::random_noise && x.cols != input_dim_) {
        throw std::invalid_argument("ScoreProvider::score: input has " + std::to_string(x.cols) +
                                    " features, provider expects " + std::to_string(input_dim_));
    }
    switch (kind_) {
        case ScoreKind::raw_x:
            return x;
        case ScoreKind::pca: {
            Matrix out(x.rows, score_dim_);
            for (std::size_t i = 0; i < x.rows; ++i) {
                for (std::size_t k = 0; k < score_dim_; ++k) {
                    const double* comp = components_.row(k);
                    double acc = 0.0;
                    for (std::size_t j = 0; j < input_dim_; ++j) {
                        acc += comp[j] * (x.at(i, j) - mean_[j]);
                    }
                    out.at(i, k) = acc;
                }
            }
            return out;
        }
        case ScoreKind::logreg_ps:
        case ScoreKind::nn_ps: {
            Matrix out(x.rows, 1);
            const std::vector<double> p = forward_batch(model_, x);
            for (std::size_t i = 0; i < x.rows; ++i) out.at(i, 0) = p[i];
            return out;
        }
        case ScoreKind::nn_layer:
            return pre_activation_batch(model_, x, layer_index_);
        case ScoreKind::random_noise: {
            Matrix out(x.rows, 1);
            Rng rng(mix_seed(noise_seed_, 0x7363726e));
            for (std::size_t i = 0; i < x.rows; ++i) out.at(i, 0) = rng.normal();
            return out;
        }
    }
    throw std::logic_error("ScoreProvider::score: bad kind");
}

std::optional<LinearMapMeta> ScoreProvider::linear_map() const {
    switch (kind_) {
        case ScoreKind::raw_x: {
            LinearMapMeta meta;
            meta.weights = Matrix::identity(input_dim_);
            meta.bias.assign(input_dim_, 0.0);
            return meta;
        }
        case ScoreKind::pca: {
            LinearMapMeta meta;
            meta.weights = components_;
            meta.bias = matvec(components_, mean_);
            for (double& v : meta.bias) v = -v;
            return meta;
        }
        case ScoreKind::nn_layer: {
            if (layer_index_ != 1) return std::nullopt;
            LinearMapMeta meta;
            meta.weights = model_.layers[0].weights;
            meta.bias = model_.layers[0].bias;
            return meta;
        }
        case ScoreKind::logreg_ps:
        case ScoreKind::nn_ps:
        case ScoreKind::random_noise:
            return std::nullopt;
    }
    return std::nullopt;
}

const Mlp& ScoreProvider::model() const {
    if (kind_ != ScoreKind::logreg_ps && kind_ != ScoreKind::nn_layer &&
        kind_ != ScoreKind::nn_ps) {
        throw std::logic_error("ScoreProvider::model: provider holds no model");
    }
    return model_;
}

ScoreProvider make_raw_provider(std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("make_raw_provider: zero dimension");
    ScoreProvider p;
    p.kind_ = ScoreKind::raw_x;
    p.input_dim_ = dim;
    p.score_dim_ = dim;
    return p;
}

ScoreProvider fit_pca(const Matrix& x, std::size_t k) {
    if (x.rows < 2 || x.cols == 0) {
        throw std::invalid_argument("fit_pca: need at least two rows, got shape " + x.shape());
    }
    if (k == 0) throw std::invalid_argument("fit_pca: k must be positive");
    if (!x.all_finite()) throw std::invalid_argument("fit_pca: non-finite covariates");

    const std::size_t n = x.rows, d = x.cols;
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
    }
    for (double& v : mean) v /= static_cast<double>(n);

    // Gram route: eigenvectors of Xc^T Xc are the right singular vectors of
    // the centered data, at a fraction of the Jacobi cost for tall inputs.
    Matrix gram(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = x.at(i, a) - mean[a];
            if (xa == 0.0) continue;
            for (std::size_t b = a; b < d; ++b) {
                gram.at(a, b) += xa * (x.at(i, b) - mean[b]);
            }
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < a; ++b) gram.at(a, b) = gram.at(b, a);
    }
    SvdResult s = svd(gram);

    // Singular values of Xc are sqrt(eigenvalues); the Gram product only
    // resolves them down to sigma_max * sqrt(machine epsilon).
    const double sigma_max = std::sqrt(std::max(s.singular_values.front(), 0.0));
    if (sigma_max <= 0.0) throw std::invalid_argument("fit_pca: data has rank 0");
    const double tol = sigma_max * std::sqrt(std::numeric_limits<double>::epsilon()) *
                       std::sqrt(static_cast<double>(std::max(n, d)));
    std::size_t rank = 0;
    for (double lambda : s.singular_values) {
        if (std::sqrt(std::max(lambda, 0.0)) > tol) ++rank;
    }

    ScoreProvider p;
    p.kind_ = ScoreKind::pca;
    p.input_dim_ = d;
    p.rank_truncated_ = k > rank;
    p.score_dim_ = std::min(k, rank);
    p.mean_ = std::move(mean);
    p.components_ = Matrix(p.score_dim_, d);
    for (std::size_t r = 0; r < p.score_dim_; ++r) {
        for (std::size_t j = 0; j < d; ++j) p.components_.at(r, j) = s.v_t.at(r, j);
    }
    return p;
}

ScoreProvider fit_logreg(const Matrix& x, const std::vector<int>& t, const TrainConfig& cfg) {
    Mlp model;
    DenseLayer layer;
    layer.weights = Matrix(1, x.cols);  // zero init: convex problem, no symmetry to break
    layer.bias = {0.0};
    layer.activation = ActivationKind::sigmoid();
    model.layers = {layer};
    TrainResult r = train(model, x, t, nullptr, nullptr, cfg);
    ScoreProvider p;
    p.kind_ = ScoreKind::logreg_ps;
    p.input_dim_ = x.cols;
    p.score_dim_ = 1;
    p.model_ = std::move(r.model);
    return p;
}

ScoreProvider make_nn_layer_provider(const Mlp& model, std::size_t layer_index) {
    model.validate();
    if (layer_index == 0 || layer_index > model.depth()) {
        throw std::invalid_argument("make_nn_layer_provider: layer index " +
                                    std::to_string(layer_index) + " outside [1, " +
                                    std::to_string(model.depth()) + "]");
    }
    ScoreProvider p;
    p.kind_ = ScoreKind::nn_layer;
    p.input_dim_ = model.input_dim();
    p.score_dim_ = model.layers[layer_index - 1].out_dim();
    p.model_ = model;
    p.layer_index_ = layer_index;
    return p;
}

ScoreProvider make_nn_ps_provider(const Mlp& model) {
    model.validate();
    ScoreProvider p;
    p.kind_ = ScoreKind::nn_ps;
    p.input_dim_ = model.input_dim();
    p.score_dim_ = 1;
    p.model_ = model;
    return p;
}

ScoreProvider make_random_provider(std::uint64_t seed) {
    ScoreProvider p;
    p.kind_ = ScoreKind::random_noise;
    p.input_dim_ = 0;  // accepts any width via score(); fixed below
    p.score_dim_ = 1;
    p.noise_seed_ = seed;
    return p;
}

std::string ScoreProvider::to_json() const {
    nlohmann::json j;
    j["format"] = "scorematch-provider-v1";
    j["kind"] = score_kind_name(kind_);
    j["input_dim"] = input_dim_;
    j["score_dim"] = score_dim_;
    switch (kind_) {
        case ScoreKind::raw_x:
            break;
        case ScoreKind::pca: {
            j["rank_truncated"] = rank_truncated_;
            std::vector<std::string> mean;
            for (double v : mean_) mean.push_back(double_to_hex(v));
            j["mean"] = std::move(mean);
            std::vector<std::string> comp;
            for (double v : components_.data) comp.push_back(double_to_hex(v));
            j["components"] = std::move(comp);
            break;
        }
        case ScoreKind::logreg_ps:
        case ScoreKind::nn_ps:
            j["model"] = nlohmann::json::parse(model_to_json(model_));
            break;
        case ScoreKind::nn_layer:
            j["model"] = nlohmann::json::parse(model_to_json(model_));
            j["layer_index"] = layer_index_;
            break;
        case ScoreKind::random_noise:
            j["seed"] = noise_seed_;
            break;
    }
    return j.dump(2);
}

ScoreProvider ScoreProvider::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("format", "") != "scorematch-provider-v1") {
        throw std::invalid_argument("provider json: unknown format tag");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "raw_x") {
        return make_raw_provider(j.at("input_dim").get<std::size_t>());
    }
    if (kind == "pca") {
        ScoreProvider p;
        p.kind_ = ScoreKind::pca;
        p.input_dim_ = j.at("input_dim").get<std::size_t>();
        p.score_dim_ = j.at("score_dim").get<std::size_t>();
        p.rank_truncated_ = j.at("rank_truncated").get<bool>();
        for (const auto& v : j.at("mean")) p.mean_.push_back(hex_to_double(v.get<std::string>()));
        const auto& comp = j.at("components");
        if (comp.size() != p.score_dim_ * p.input_dim_ || p.mean_.size() != p.input_dim_) {
            throw std::invalid_argument("provider json: pca payload size mismatch");
        }
        p.components_ = Matrix(p.score_dim_, p.input_dim_);
        for (std::size_t k = 0; k < comp.size(); ++k) {
            p.components_.data[k] = hex_to_double(comp[k].get<std::string>());
        }
        return p;
    }
    if (kind == "logreg_ps" || kind == "nn_ps" || kind == "nn_layer") {
        Mlp model = model_from_json(j.at("model").dump());
        if (kind == "nn_layer") {
            return make_nn_layer_provider(model, j.at("layer_index").get<std::size_t>());
        }
        ScoreProvider p;
        p.kind_ = (kind == "logreg_ps") ? ScoreKind::logreg_ps : ScoreKind::nn_ps;
        p.input_dim_ = model.input_dim();
        p.score_dim_ = 1;
        p.model_ = std::move(model);
        return p;
    }
    if (kind == "random_noise") {
        ScoreProvider p = make_random_provider(j.at("seed").get<std::uint64_t>());
        p.input_dim_ = j.at("input_dim").get<std::size_t>();
        return p;
    }
    throw std::invalid_argument("provider json: unknown kind '" + kind + "'");
}

void ScoreProvider::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("ScoreProvider::save: cannot open " + path);
    out << to_json() << "\n";
    if (!out) throw std::runtime_error("ScoreProvider::save: write failed for " + path);
}

ScoreProvider ScoreProvider::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ScoreProvider::load: cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json(buffer.str());
}

}  // namespace scorematch
