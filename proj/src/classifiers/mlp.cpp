#include "lvdiag/classifiers.hpp"

#include "lvdiag/rng.hpp"
#include "lvdiag/tensor/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lvdiag::clf {
namespace {

Tensor one_hot(const Labels& y, const std::vector<std::size_t>& idx) {
    Tensor t({idx.size(), 2});
    for (std::size_t r = 0; r < idx.size(); ++r) t[r * 2 + std::size_t(y[idx[r]] ? 1 : 0)] = 1.0;
    return t;
}

Tensor gather_rows(const Tensor& X, const std::vector<std::size_t>& idx) {
    const std::size_t p = X.dim(1);
    Tensor out({idx.size(), p});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(X.data().begin() + std::ptrdiff_t(idx[r] * p), p, out.data().begin() + std::ptrdiff_t(r * p));
    return out;
}

} // namespace

Var MlpModel::forward(Graph& g, std::span<const Var> p, Var x, bool training, std::uint64_t dropout_seed) const {
    Var h = x;
    for (std::size_t layer = 0; layer < 3; ++layer) {
        h = g.relu(g.dense(h, p[2 * layer], p[2 * layer + 1]));
        if (training && config.dropout > 0.0)
            h = g.dropout(h, DropoutAttrs{1.0 - config.dropout, true, derive_seed(dropout_seed, layer)});
    }
    return g.dense(h, p[6], p[7]);
}

MlpModel mlp_init(std::size_t inputs, const MlpConfig& cfg) {
    if (inputs == 0) throw std::invalid_argument("mlp: no input features");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw std::invalid_argument("mlp: dropout rate outside [0,1)");
    MlpModel m;
    m.config = cfg;
    Rng rng(derive_seed(cfg.seed, 0x1417));
    const std::size_t widths[5] = {inputs, kMlpWidths[0], kMlpWidths[1], kMlpWidths[2], 2};
    for (std::size_t layer = 0; layer < 4; ++layer) {
        Tensor w({widths[layer], widths[layer + 1]});
        const double bound = std::sqrt(6.0 / double(widths[layer]));
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        m.params.push_back(std::move(w));
        m.params.push_back(Tensor::zeros({widths[layer + 1]}));
    }
    return m;
}

MlpModel mlp_train(const Tensor& X, const Labels& y, const MlpConfig& cfg) {
    if (X.rank() != 2 || X.dim(0) != y.size())
        throw ShapeError("mlp_train: X " + shape_str(X.shape()) + " with " + std::to_string(y.size()) + " labels");
    if (cfg.batch_size == 0) throw std::invalid_argument("mlp_train: batch_size must be >= 1");
    if (!(cfg.lr >= 0.0)) throw std::invalid_argument("mlp_train: lr must be >= 0");
    for (double v : X.data())
        if (!std::isfinite(v)) throw std::invalid_argument("mlp_train: non-finite feature value");
    MlpModel m = mlp_init(X.dim(1), cfg);
    m.scaler = Scaler::fit(X);
    const Tensor Xs = m.scaler.apply(X);
    const std::size_t n = y.size();
    AdamState adam = AdamState::for_params(m.params);
    std::vector<std::size_t> order(n);
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t(0));
        Rng shuffle(derive_seed(cfg.seed, 0x5AFF, epoch));
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + std::ptrdiff_t(start),
                                               order.begin() + std::ptrdiff_t(std::min(n, start + cfg.batch_size)));
            Graph g;
            std::vector<Var> p;
            for (const Tensor& t : m.params) p.push_back(g.parameter(t));
            const Var logits = m.forward(g, p, g.input(gather_rows(Xs, idx)), true, derive_seed(cfg.seed, 0xD120, step++));
            const Var loss = g.softmax_cross_entropy(logits, g.input(one_hot(y, idx)));
            const double value = g.value(loss).item();
            if (!std::isfinite(value))
                throw MlpDiverged(epoch, "mlp_train: non-finite loss at epoch " + std::to_string(epoch));
            total += value * double(idx.size());
            const Gradients grads = g.backward(loss);
            std::vector<Tensor> gs;
            for (const Var v : p) gs.push_back(grads.of(v));
            adam_step(m.params, gs, adam, cfg.lr);
        }
        m.loss_history.push_back(total / double(n));
    }
    return m;
}

Tensor mlp_predict(const MlpModel& m, const Tensor& X) {
    Graph g;
    std::vector<Var> p;
    for (const Tensor& t : m.params) p.push_back(g.input(t));
    const Var probs = g.softmax(m.forward(g, p, g.input(m.scaler.apply(X)), false, 0), 1);
    return g.value(probs);
}

} // namespace lvdiag::clf
