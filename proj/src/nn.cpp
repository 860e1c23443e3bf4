#include "scorematch/nn.hpp"

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

ActivationKind ActivationKind::leaky_relu(double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw std::invalid_argument("leaky_relu: slope must lie in (0,1), got " +
                                    std::to_string(slope));
    }
    return {Activation::leaky_relu, slope};
}

double ActivationKind::apply(double z) const {
    switch (kind) {
        case Activation::identity: return z;
        case Activation::leaky_relu: return z >= 0.0 ? z : slope * z;
        case Activation::sigmoid: return sigmoid_value(z);
    }
    throw std::logic_error("ActivationKind::apply: bad kind");
}

double ActivationKind::derivative(double z) const {
    switch (kind) {
        case Activation::identity: return 1.0;
        case Activation::leaky_relu: return z >= 0.0 ? 1.0 : slope;
        case Activation::sigmoid: {
            const double s = sigmoid_value(z);
            return s * (1.0 - s);
        }
    }
    throw std::logic_error("ActivationKind::derivative: bad kind");
}

std::string ActivationKind::name() const {
    switch (kind) {
        case Activation::identity: return "identity";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

double sigmoid_value(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weights.data.size() + layer.bias.size();
    return n;
}

void Mlp::validate() const {
    if (layers.empty()) throw std::invalid_argument("Mlp: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weights.rows == 0 || layer.weights.cols == 0) {
            throw std::invalid_argument("Mlp: layer " + std::to_string(l + 1) + " is empty");
        }
        if (layer.bias.size() != layer.out_dim()) {
            throw std::invalid_argument("Mlp: layer " + std::to_string(l + 1) + " has " +
                                        std::to_string(layer.bias.size()) + " biases for " +
                                        std::to_string(layer.out_dim()) + " outputs");
        }
        if (l + 1 < layers.size() && layers[l + 1].in_dim() != layer.out_dim()) {
            throw std::invalid_argument("Mlp: layer " + std::to_string(l + 2) +
                                        " expects " + std::to_string(layers[l + 1].in_dim()) +
                                        " inputs but layer " + std::to_string(l + 1) +
                                        " emits " + std::to_string(layer.out_dim()));
        }
        if (!layer.weights.all_finite()) {
            throw std::invalid_argument("Mlp: non-finite weights in layer " +
                                        std::to_string(l + 1));
        }
    }
    if (layers.back().out_dim() != 1 || layers.back().activation.kind != Activation::sigmoid) {
        throw std::invalid_argument("Mlp: final layer must be a single sigmoid unit");
    }
}

Mlp make_mlp(const std::vector<std::size_t>& widths, double leaky_slope, std::uint64_t seed) {
    if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least two widths");
    if (widths.back() != 1) throw std::invalid_argument("make_mlp: output width must be 1");
    Rng rng(mix_seed(seed, 0x6d6c70));
    Mlp model;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        layer.weights = Matrix(widths[l + 1], widths[l]);
        layer.bias.assign(widths[l + 1], 0.0);
        const double r = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l + 1]));
        for (double& w : layer.weights.data) w = rng.uniform(-r, r);
        const bool last = (l + 2 == widths.size());
        layer.activation = last ? ActivationKind::sigmoid()
                                : ActivationKind::leaky_relu(leaky_slope);
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

Mlp default_architecture(std::size_t input_dim, std::uint64_t seed) {
    return make_mlp({input_dim, 5, 100, 100, 1}, 0.01, seed);
}

namespace {

void check_input(const Mlp& model, std::size_t dim) {
    if (model.layers.empty()) throw std::invalid_argument("Mlp: no layers");
    if (model.input_dim() != dim) {
        throw std::invalid_argument("Mlp: input has " + std::to_string(dim) +
                                    " features, model expects " +
                                    std::to_string(model.input_dim()));
    }
}

// Affine step z = W a + c.
void affine(const DenseLayer& layer, const std::vector<double>& a, std::vector<double>& z) {
    z.assign(layer.out_dim(), 0.0);
    for (std::size_t i = 0; i < layer.out_dim(); ++i) {
        const double* wrow = layer.weights.row(i);
        double acc = layer.bias[i];
        for (std::size_t j = 0; j < layer.in_dim(); ++j) acc += wrow[j] * a[j];
        z[i] = acc;
    }
}

}  // namespace

double forward(const Mlp& model, const double* x) {
    std::vector<double> a(x, x + model.input_dim());
    std::vector<double> z;
    for (const auto& layer : model.layers) {
        affine(layer, a, z);
        a.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = layer.activation.apply(z[i]);
    }
    return a[0];
}

std::vector<double> forward_batch(const Mlp& model, const Matrix& x) {
    check_input(model, x.cols);
    std::vector<double> out(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) out[i] = forward(model, x.row(i));
    return out;
}

std::vector<double> pre_activation(const Mlp& model, const double* x, std::size_t layer_index) {
    if (layer_index == 0 || layer_index > model.depth()) {
        throw std::invalid_argument("pre_activation: layer index " +
                                    std::to_string(layer_index) + " outside [1, " +
                                    std::to_string(model.depth()) + "]");
    }
    std::vector<double> a(x, x + model.input_dim());
    std::vector<double> z;
    for (std::size_t l = 0; l < layer_index; ++l) {
        const auto& layer = model.layers[l];
        affine(layer, a, z);
        if (l + 1 == layer_index) return z;
        a.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = layer.activation.apply(z[i]);
    }
    return z;
}

Matrix pre_activation_batch(const Mlp& model, const Matrix& x, std::size_t layer_index) {
    check_input(model, x.cols);
    if (layer_index == 0 || layer_index > model.depth()) {
        throw std::invalid_argument("pre_activation_batch: layer index " +
                                    std::to_string(layer_index) + " outside [1, " +
                                    std::to_string(model.depth()) + "]");
    }
    Matrix out(x.rows, model.layers[layer_index - 1].out_dim());
    for (std::size_t i = 0; i < x.rows; ++i) {
        const std::vector<double> z = pre_activation(model, x.row(i), layer_index);
        for (std::size_t j = 0; j < z.size(); ++j) out.at(i, j) = z[j];
    }
    return out;
}

double bce_loss(const Mlp& model, const Matrix& x, const std::vector<int>& t) {
    check_input(model, x.cols);
    if (t.size() != x.rows || x.rows == 0) {
        throw std::invalid_argument("bce_loss: " + std::to_string(x.rows) + " rows vs " +
                                    std::to_string(t.size()) + " labels");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const std::vector<double> z = pre_activation(model, x.row(i), model.depth());
        // softplus(z) - t z = -log p(t | x), stable for large |z|
        const double zi = z[0];
        const double softplus = std::max(zi, 0.0) + std::log1p(std::exp(-std::abs(zi)));
        total += softplus - static_cast<double>(t[i]) * zi;
    }
    return total / static_cast<double>(x.rows);
}

Gradients gradient(const Mlp& model, const Matrix& x, const std::vector<int>& t,
                   double weight_decay) {
    model.validate();
    check_input(model, x.cols);
    if (t.size() != x.rows || x.rows == 0) {
        throw std::invalid_argument("gradient: " + std::to_string(x.rows) + " rows vs " +
                                    std::to_string(t.size()) + " labels");
    }
    const std::size_t depth = model.depth();
    Gradients g;
    g.d_weights.reserve(depth);
    g.d_bias.reserve(depth);
    for (const auto& layer : model.layers) {
        g.d_weights.emplace_back(layer.out_dim(), layer.in_dim());
        g.d_bias.emplace_back(layer.out_dim(), 0.0);
    }

    const double inv_n = 1.0 / static_cast<double>(x.rows);
    std::vector<std::vector<double>> acts(depth + 1), pres(depth);
    for (std::size_t s = 0; s < x.rows; ++s) {
        acts[0].assign(x.row(s), x.row(s) + x.cols);
        for (std::size_t l = 0; l < depth; ++l) {
            affine(model.layers[l], acts[l], pres[l]);
            acts[l + 1].resize(pres[l].size());
            for (std::size_t i = 0; i < pres[l].size(); ++i) {
                acts[l + 1][i] = model.layers[l].activation.apply(pres[l][i]);
            }
        }
        // With a sigmoid output and cross-entropy loss, dL/dz_L = p - t.
        std::vector<double> dz(1, (acts[depth][0] - static_cast<double>(t[s])) * inv_n);
        for (std::size_t l = depth; l-- > 0;) {
            const auto& layer = model.layers[l];
            for (std::size_t i = 0; i < layer.out_dim(); ++i) {
                const double di = dz[i];
                if (di == 0.0) continue;
                double* grow = g.d_weights[l].row(i);
                const std::vector<double>& input = acts[l];
                for (std::size_t j = 0; j < layer.in_dim(); ++j) grow[j] += di * input[j];
                g.d_bias[l][i] += di;
            }
            if (l == 0) break;
            std::vector<double> dprev(layer.in_dim(), 0.0);
            for (std::size_t i = 0; i < layer.out_dim(); ++i) {
                const double di = dz[i];
                if (di == 0.0) continue;
                const double* wrow = layer.weights.row(i);
                for (std::size_t j = 0; j < layer.in_dim(); ++j) dprev[j] += di * wrow[j];
            }
            for (std::size_t j = 0; j < dprev.size(); ++j) {
                dprev[j] *= model.layers[l - 1].activation.derivative(pres[l - 1][j]);
            }
            dz = std::move(dprev);
        }
    }

    if (weight_decay != 0.0) {
        for (std::size_t l = 0; l < depth; ++l) {
            for (std::size_t k = 0; k < g.d_weights[l].data.size(); ++k) {
                g.d_weights[l].data[k] += weight_decay * model.layers[l].weights.data[k];
            }
            for (std::size_t i = 0; i < g.d_bias[l].size(); ++i) {
                g.d_bias[l][i] += weight_decay * model.layers[l].bias[i];
            }
        }
    }
    return g;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("TrainConfig: bad learning_rate");
    }
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: bad weight_decay");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (max_epochs == 0) throw std::invalid_argument("TrainConfig: max_epochs must be positive");
    if (early_stopping_patience && *early_stopping_patience == 0) {
        throw std::invalid_argument("TrainConfig: patience must be positive when set");
    }
}

TrainResult train(const Mlp& model, const Matrix& x, const std::vector<int>& t,
                  const Matrix* val_x, const std::vector<int>* val_t, const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    check_input(model, x.cols);
    if (t.size() != x.rows || x.rows == 0) {
        throw std::invalid_argument("train: " + std::to_string(x.rows) + " rows vs " +
                                    std::to_string(t.size()) + " labels");
    }
    bool any[2] = {false, false};
    for (int v : t) {
        if (v != 0 && v != 1) throw std::invalid_argument("train: labels must be binary");
        any[v] = true;
    }
    if (!any[0] || !any[1]) {
        throw std::invalid_argument("train: training set holds a single class");
    }
    const bool has_val = (val_x != nullptr);
    if (has_val && (val_t == nullptr || val_t->size() != val_x->rows || val_x->rows == 0)) {
        throw std::invalid_argument("train: malformed validation set");
    }
    if (cfg.early_stopping_patience && !has_val) {
        throw std::invalid_argument("train: early stopping needs a validation set");
    }

    TrainResult result;
    result.model = model;
    Rng rng(mix_seed(cfg.rng_seed, 0x747261696e));
    std::vector<std::size_t> order(x.rows);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Mlp best = result.model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Matrix bx(stop - start, x.cols);
            std::vector<int> bt(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                for (std::size_t j = 0; j < x.cols; ++j) bx.at(k - start, j) = x.at(i, j);
                bt[k - start] = t[i];
            }
            Gradients g = gradient(result.model, bx, bt, cfg.weight_decay);
            for (std::size_t l = 0; l < result.model.layers.size(); ++l) {
                auto& layer = result.model.layers[l];
                for (std::size_t k = 0; k < layer.weights.data.size(); ++k) {
                    layer.weights.data[k] -= cfg.learning_rate * g.d_weights[l].data[k];
                }
                for (std::size_t i = 0; i < layer.bias.size(); ++i) {
                    layer.bias[i] -= cfg.learning_rate * g.d_bias[l][i];
                }
            }
        }
        const double epoch_loss = bce_loss(result.model, x, t);
        if (!std::isfinite(epoch_loss)) {
            throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch + 1));
        }
        result.train_loss.push_back(epoch_loss);
        result.epochs_run = epoch + 1;
        if (has_val) {
            const double vloss = bce_loss(result.model, *val_x, *val_t);
            if (!std::isfinite(vloss)) {
                throw std::runtime_error("train: validation loss diverged at epoch " +
                                         std::to_string(epoch + 1));
            }
            result.val_loss.push_back(vloss);
            if (vloss < best_val) {
                best_val = vloss;
                best = result.model;
                result.best_epoch = epoch + 1;
                since_best = 0;
            } else {
                ++since_best;
            }
            if (cfg.early_stopping_patience && since_best >= *cfg.early_stopping_patience) {
                break;
            }
        }
    }
    if (cfg.early_stopping_patience) result.model = std::move(best);
    return result;
}

TrainResult train(const Mlp& model, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg) {
    if (val_set) {
        return train(model, train_set.x, train_set.t, &val_set->x, &val_set->t, cfg);
    }
    return train(model, train_set.x, train_set.t, nullptr, nullptr, cfg);
}

namespace {

nlohmann::json layer_to_json(const DenseLayer& layer) {
    nlohmann::json j;
    j["out"] = layer.out_dim();
    j["in"] = layer.in_dim();
    j["activation"] = layer.activation.name();
    if (layer.activation.kind == Activation::leaky_relu) j["slope"] = layer.activation.slope;
    std::vector<std::string> w;
    w.reserve(layer.weights.data.size());
    for (double v : layer.weights.data) w.push_back(double_to_hex(v));
    j["weights"] = std::move(w);
    std::vector<std::string> b;
    b.reserve(layer.bias.size());
    for (double v : layer.bias) b.push_back(double_to_hex(v));
    j["bias"] = std::move(b);
    return j;
}

DenseLayer layer_from_json(const nlohmann::json& j) {
    DenseLayer layer;
    const std::size_t out = j.at("out").get<std::size_t>();
    const std::size_t in = j.at("in").get<std::size_t>();
    const std::string act = j.at("activation").get<std::string>();
    if (act == "identity") {
        layer.activation = ActivationKind::identity();
    } else if (act == "leaky_relu") {
        layer.activation = ActivationKind::leaky_relu(j.at("slope").get<double>());
    } else if (act == "sigmoid") {
        layer.activation = ActivationKind::sigmoid();
    } else {
        throw std::invalid_argument("model json: unknown activation '" + act + "'");
    }
    const auto& w = j.at("weights");
    if (w.size() != out * in) {
        throw std::invalid_argument("model json: layer weight count " +
                                    std::to_string(w.size()) + " does not match " +
                                    std::to_string(out) + "x" + std::to_string(in));
    }
    layer.weights = Matrix(out, in);
    for (std::size_t k = 0; k < w.size(); ++k) {
        layer.weights.data[k] = hex_to_double(w[k].get<std::string>());
    }
    const auto& b = j.at("bias");
    if (b.size() != out) {
        throw std::invalid_argument("model json: layer bias count mismatch");
    }
    layer.bias.resize(out);
    for (std::size_t k = 0; k < out; ++k) layer.bias[k] = hex_to_double(b[k].get<std::string>());
    return layer;
}

}  // namespace

std::string model_to_json(const Mlp& model) {
    model.validate();
    nlohmann::json j;
    j["format"] = "scorematch-mlp-v1";
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : model.layers) j["layers"].push_back(layer_to_json(layer));
    return j.dump(2);
}

Mlp model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("format", "") != "scorematch-mlp-v1") {
        throw std::invalid_argument("model json: unknown format tag");
    }
    Mlp model;
    for (const auto& layer : j.at("layers")) model.layers.push_back(layer_from_json(layer));
    model.validate();
    return model;
}

void save_model(const Mlp& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << model_to_json(model) << "\n";
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

Mlp load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return model_from_json(buffer.str());
}

}  // namespace scorematch
