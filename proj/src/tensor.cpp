#include "gazeforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace gazeforge {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor() : shape_{}, data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

Tensor Tensor::scalar(double v) {
    Tensor t;
    (*t.data_)[0] = v;
    return t;
}

Tensor Tensor::zeros(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(shape_numel(t.shape_), 0.0);
    return t;
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) {
        throw shape_error("from_values: shape " + shape_str(shape) + " expects " +
                          std::to_string(shape_numel(shape)) + " values, got " +
                          std::to_string(values.size()));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(values));
    return t;
}

std::size_t Tensor::numel() const { return data_->size(); }

static void require_rank4(const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw shape_error(std::string(what) + ": expected rank-4 tensor, got " +
                          shape_str(t.shape()));
    }
}

std::size_t Tensor::batch() const {
    require_rank4(*this, "batch()");
    return shape_[0];
}
std::size_t Tensor::channels() const {
    require_rank4(*this, "channels()");
    return shape_[1];
}
std::size_t Tensor::height() const {
    require_rank4(*this, "height()");
    return shape_[2];
}
std::size_t Tensor::width() const {
    require_rank4(*this, "width()");
    return shape_[3];
}

std::vector<double>& Tensor::mutable_values() {
    if (recorded()) {
        throw usage_error("mutable_values: tensor is recorded on a tape; detach first");
    }
    if (data_.use_count() > 1) {
        data_ = std::make_shared<std::vector<double>>(*data_);
    }
    return *data_;
}

double Tensor::scalar_value() const {
    if (numel() != 1) {
        throw shape_error("scalar_value: tensor has " + std::to_string(numel()) + " elements");
    }
    return (*data_)[0];
}

double Tensor::at4(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    require_rank4(*this, "at4()");
    return (*data_)[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

Tensor Tensor::detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
}

Tensor Tensor::grad() const {
    if (!recorded()) {
        throw usage_error("grad: tensor is not recorded on a tape");
    }
    if (!tape_->backward_done()) {
        throw usage_error("grad: backward has not been run on the owning tape");
    }
    const std::vector<double>* g = tape_->grad_buffer(node_);
    Tensor out = Tensor::zeros(shape_);
    if (g) *out.data_ = *g;
    return out;
}

bool Tensor::all_finite() const {
    for (double v : *data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ------------------------------------------------------------------ Tape

Tensor Tape::watch(const Tensor& leaf) {
    if (leaf.recorded()) {
        throw usage_error("watch: tensor is already recorded on a tape");
    }
    Tensor t = leaf;  // shares payload
    t.tape_ = this;
    t.node_ = add_node(t.numel());
    return t;
}

void Tape::record(Tensor& result) {
    result.tape_ = this;
    result.node_ = add_node(result.numel());
}

void Tape::push_rule(std::function<void(Tape&)> backward_rule) {
    ops_.push_back(std::move(backward_rule));
}

int Tape::add_node(std::size_t numel) {
    node_sizes_.push_back(numel);
    grads_.emplace_back(nullptr);
    return static_cast<int>(node_sizes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
    if (backward_done_) {
        throw usage_error("backward: tape already replayed; backward runs exactly once");
    }
    if (!loss.recorded() || loss.tape() != this) {
        throw usage_error("backward: loss is not recorded on this tape");
    }
    if (loss.numel() != 1) {
        throw usage_error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    accum_buffer(loss.node(), 1)[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        (*it)(*this);
    }
    backward_done_ = true;
}

const std::vector<double>* Tape::grad_buffer(int node) const {
    if (node < 0 || node >= static_cast<int>(grads_.size())) return nullptr;
    return grads_[static_cast<std::size_t>(node)].get();
}

std::vector<double>& Tape::accum_buffer(int node, std::size_t n) {
    auto& slot = grads_[static_cast<std::size_t>(node)];
    if (!slot) slot = std::make_unique<std::vector<double>>(n, 0.0);
    return *slot;
}

Tape* op_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->recorded()) continue;
        if (tape && tape != t->tape()) {
            throw usage_error("op inputs are recorded on different tapes");
        }
        tape = t->tape();
    }
    return tape;
}

// --------------------------------------------------------- elementwise ops

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw shape_error(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    }
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double s) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += s * src[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a, &b})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), bn = b.node(), n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g) return;
            if (an >= 0) axpy(t.accum_buffer(an, n), *g, 1.0);
            if (bn >= 0) axpy(t.accum_buffer(bn, n), *g, 1.0);
        });
    }
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a, &b})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), bn = b.node(), n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g) return;
            if (an >= 0) axpy(t.accum_buffer(an, n), *g, 1.0);
            if (bn >= 0) axpy(t.accum_buffer(bn, n), *g, -1.0);
        });
    }
    return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a, &b})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), bn = b.node(), a2 = a.detach(),
                         b2 = b.detach(), n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g) return;
            if (an >= 0) {
                auto& ga = t.accum_buffer(an, n);
                const auto& bvv = b2.values();
                for (std::size_t i = 0; i < n; ++i) ga[i] += (*g)[i] * bvv[i];
            }
            if (bn >= 0) {
                auto& gb = t.accum_buffer(bn, n);
                const auto& avv = a2.values();
                for (std::size_t i = 0; i < n; ++i) gb[i] += (*g)[i] * avv[i];
            }
        });
    }
    return r;
}

Tensor scale(const Tensor& a, double c) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), c, n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            axpy(t.accum_buffer(an, n), *g, c);
        });
    }
    return r;
}

Tensor offset(const Tensor& a, double c) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            axpy(t.accum_buffer(an, n), *g, 1.0);
        });
    }
    return r;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp_elem(const Tensor& a) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), y = r.detach(), n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            auto& ga = t.accum_buffer(an, n);
            const auto& yv = y.values();
            for (std::size_t i = 0; i < n; ++i) ga[i] += (*g)[i] * yv[i];
        });
    }
    return r;
}

Tensor log_elem(const Tensor& a) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] > 0.0)) {
            throw value_error("log: nonpositive entry " + std::to_string(av[i]) + " at index " +
                              std::to_string(i));
        }
        out[i] = std::log(av[i]);
    }
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), x = a.detach(), n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            auto& ga = t.accum_buffer(an, n);
            const auto& xv = x.values();
            for (std::size_t i = 0; i < n; ++i) ga[i] += (*g)[i] / xv[i];
        });
    }
    return r;
}

Tensor clamp_min(const Tensor& a, double lo) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > lo ? av[i] : lo;
    Tensor r = Tensor::from_values(a.shape(), std::move(out));
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), x = a.detach(), lo,
                         n = r.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            auto& ga = t.accum_buffer(an, n);
            const auto& xv = x.values();
            for (std::size_t i = 0; i < n; ++i) {
                if (xv[i] > lo) ga[i] += (*g)[i];
            }
        });
    }
    return r;
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor r = Tensor::scalar(s);
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), n = a.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            auto& ga = t.accum_buffer(an, n);
            const double gv = (*g)[0];
            for (std::size_t i = 0; i < n; ++i) ga[i] += gv;
        });
    }
    return r;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw shape_error("reshape: cannot view " + shape_str(a.shape()) + " as " +
                          shape_str(shape));
    }
    Tensor r = Tensor::from_values(std::move(shape), a.values());
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), n = a.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            axpy(t.accum_buffer(an, n), *g, 1.0);
        });
    }
    return r;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw usage_error("concat_channels: no inputs");
    const Tensor& first = parts.front();
    require_rank4(first, "concat_channels");
    const std::size_t b = first.batch(), h = first.height(), w = first.width();
    std::size_t ctot = 0;
    for (const Tensor& p : parts) {
        require_rank4(p, "concat_channels");
        if (p.batch() != b || p.height() != h || p.width() != w) {
            throw shape_error("concat_channels: incompatible part shape " + shape_str(p.shape()));
        }
        ctot += p.channels();
    }
    std::vector<double> out(b * ctot * h * w);
    const std::size_t plane = h * w;
    std::size_t coff = 0;
    for (const Tensor& p : parts) {
        const auto& pv = p.values();
        const std::size_t pc = p.channels();
        for (std::size_t bi = 0; bi < b; ++bi) {
            std::copy(pv.begin() + static_cast<std::ptrdiff_t>(bi * pc * plane),
                      pv.begin() + static_cast<std::ptrdiff_t>((bi + 1) * pc * plane),
                      out.begin() + static_cast<std::ptrdiff_t>((bi * ctot + coff) * plane));
        }
        coff += pc;
    }
    Tensor r = Tensor::from_values({b, ctot, h, w}, std::move(out));

    std::vector<const Tensor*> ptrs;
    for (const Tensor& p : parts) ptrs.push_back(&p);
    Tape* tape = nullptr;
    for (const Tensor* p : ptrs) {
        if (p->recorded()) {
            if (tape && tape != p->tape()) {
                throw usage_error("concat_channels: inputs on different tapes");
            }
            tape = p->tape();
        }
    }
    if (tape) {
        tape->record(r);
        struct PartInfo {
            int node;
            std::size_t channels;
        };
        std::vector<PartInfo> infos;
        for (const Tensor& p : parts) infos.push_back({p.node(), p.channels()});
        tape->push_rule([on = r.node(), infos, b, ctot, plane](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g) return;
            std::size_t coff = 0;
            for (const PartInfo& info : infos) {
                if (info.node >= 0) {
                    auto& gp = t.accum_buffer(info.node, b * info.channels * plane);
                    for (std::size_t bi = 0; bi < b; ++bi) {
                        const double* src = g->data() + (bi * ctot + coff) * plane;
                        double* dst = gp.data() + bi * info.channels * plane;
                        for (std::size_t i = 0; i < info.channels * plane; ++i) dst[i] += src[i];
                    }
                }
                coff += info.channels;
            }
        });
    }
    return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw shape_error("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                          " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    if (b.shape()[0] != k) {
        throw shape_error("matmul: inner extents differ: " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    }
    const std::size_t n = b.shape()[1];
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = av[i * k + kk];
            const double* brow = bv.data() + kk * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    Tensor r = Tensor::from_values({m, n}, std::move(out));
    if (Tape* tape = op_tape({&a, &b})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), bn = b.node(), a2 = a.detach(),
                         b2 = b.detach(), m, k, n](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g) return;
            if (an >= 0) {
                // dA = G * B^T
                auto& ga = t.accum_buffer(an, m * k);
                const auto& bvv = b2.values();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        const double* grow = g->data() + i * n;
                        const double* brow = bvv.data() + kk * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + kk] += acc;
                    }
                }
            }
            if (bn >= 0) {
                // dB = A^T * G
                auto& gb = t.accum_buffer(bn, k * n);
                const auto& avv = a2.values();
                for (std::size_t kk = 0; kk < k; ++kk) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double aik = avv[i * k + kk];
                        const double* grow = g->data() + i * n;
                        double* gbrow = gb.data() + kk * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                    }
                }
            }
        });
    }
    return r;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) {
        throw shape_error("transpose2d: expects rank-2, got " + shape_str(a.shape()));
    }
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    const auto& av = a.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    }
    Tensor r = Tensor::from_values({n, m}, std::move(out));
    if (Tape* tape = op_tape({&a})) {
        tape->record(r);
        tape->push_rule([on = r.node(), an = a.node(), m, n](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || an < 0) return;
            auto& ga = t.accum_buffer(an, m * n);
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t i = 0; i < m; ++i) ga[i * n + j] += (*g)[j * m + i];
            }
        });
    }
    return r;
}

// ------------------------------------------------------------- checksums

std::uint64_t fnv1a64(const void* data, std::size_t nbytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < nbytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t tensor_checksum(const Tensor& t) {
    std::uint64_t h = fnv1a64(t.values().data(), t.numel() * sizeof(double));
    for (std::size_t e : t.shape()) {
        h ^= fnv1a64(&e, sizeof(e));
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace gazeforge
