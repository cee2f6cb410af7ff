#include "topo/tape.hpp"

#include <algorithm>
#include <cmath>

namespace topo {

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_size(shape) != static_cast<int>(data.size())) {
        throw ShapeMismatchError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    const int n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    const int n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

int shape_size(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeMismatchError("negative extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

const std::vector<int>& Var::shape() const { return value().shape; }
const Tensor& Var::value() const { return tape_->value(*this); }
const Tensor& Var::grad() const { return tape_->grad(*this); }

void Tape::check_owned(Var v) const {
    if (v.tape_ != this || v.id_ < 0 || v.id_ >= static_cast<int>(nodes_.size())) {
        throw Error("variable does not belong to this tape");
    }
}

const Tensor& Tape::value(Var v) const {
    check_owned(v);
    return node(v.id_).value;
}

const Tensor& Tape::grad(Var v) const {
    check_owned(v);
    const Node& n = node(v.id_);
    if (!n.requires_grad) throw Error("variable does not require gradients");
    if (n.grad.data.empty()) throw Error("gradients not computed; call backward first");
    return n.grad;
}

Var Tape::push(Tensor value, std::vector<int> parents, bool requires_grad,
               std::function<void(Tape&, int)> pullback) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = requires_grad;
    if (requires_grad) n.pullback = std::move(pullback);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), {}, requires_grad, nullptr);
}

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw ShapeMismatchError(std::string(op) + ": shapes " + shape_str(a.shape) + " and " +
                                 shape_str(b.shape) + " differ");
    }
}

// Decompose shape around an axis: (outer, extent, inner).
struct AxisView {
    size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const std::vector<int>& shape, int axis) {
    if (axis < 0 || axis >= static_cast<int>(shape.size())) {
        throw ShapeMismatchError("axis " + std::to_string(axis) + " out of range for shape " +
                                 shape_str(shape));
    }
    AxisView v;
    for (int i = 0; i < axis; ++i) v.outer *= static_cast<size_t>(shape[i]);
    v.extent = static_cast<size_t>(shape[axis]);
    for (size_t i = axis + 1; i < shape.size(); ++i) v.inner *= static_cast<size_t>(shape[i]);
    return v;
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
    check_owned(a);
    check_owned(b);
    const Tensor& av = node(a.id_).value;
    const Tensor& bv = node(b.id_).value;
    if (av.ndim() != 2 || bv.ndim() != 2 || av.shape[1] != bv.shape[0]) {
        throw ShapeMismatchError("matmul: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
    }
    const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = av.at2(i, p);
            if (aip == 0.0) continue;
            for (int j = 0; j < n; ++j) out.at2(i, j) += aip * bv.at2(p, j);
        }
    }
    const int aid = a.id_, bid = b.id_;
    const bool req = node(aid).requires_grad || node(bid).requires_grad;
    return push(std::move(out), {aid, bid}, req, [aid, bid, m, k, n](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& avr = t.node(aid).value;
        const Tensor& bvr = t.node(bid).value;
        if (t.node(aid).requires_grad) {
            Tensor& da = t.node(aid).grad;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gij = g.at2(i, j);
                    if (gij == 0.0) continue;
                    for (int p = 0; p < k; ++p) da.at2(i, p) += gij * bvr.at2(p, j);
                }
        }
        if (t.node(bid).requires_grad) {
            Tensor& db = t.node(bid).grad;
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const double aip = avr.at2(i, p);
                    if (aip == 0.0) continue;
                    for (int j = 0; j < n; ++j) db.at2(p, j) += aip * g.at2(i, j);
                }
        }
    });
}

Var Tape::add(Var a, Var b) {
    check_owned(a);
    check_owned(b);
    const Tensor& av = node(a.id_).value;
    const Tensor& bv = node(b.id_).value;
    check_same_shape("add", av, bv);
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    const int aid = a.id_, bid = b.id_;
    const bool req = node(aid).requires_grad || node(bid).requires_grad;
    return push(std::move(out), {aid, bid}, req, [aid, bid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.node(aid).requires_grad) {
            Tensor& da = t.node(aid).grad;
            for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (t.node(bid).requires_grad) {
            Tensor& db = t.node(bid).grad;
            for (size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    check_owned(a);
    check_owned(b);
    const Tensor& av = node(a.id_).value;
    const Tensor& bv = node(b.id_).value;
    check_same_shape("sub", av, bv);
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
    const int aid = a.id_, bid = b.id_;
    const bool req = node(aid).requires_grad || node(bid).requires_grad;
    return push(std::move(out), {aid, bid}, req, [aid, bid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.node(aid).requires_grad) {
            Tensor& da = t.node(aid).grad;
            for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
        }
        if (t.node(bid).requires_grad) {
            Tensor& db = t.node(bid).grad;
            for (size_t i = 0; i < g.data.size(); ++i) db.data[i] -= g.data[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    check_owned(a);
    Tensor out = node(a.id_).value;
    for (double& x : out.data) x *= c;
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid, c](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        Tensor& da = t.node(aid).grad;
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += c * g.data[i];
    });
}

Var Tape::add_scalar(Var a, double c) {
    check_owned(a);
    Tensor out = node(a.id_).value;
    for (double& x : out.data) x += c;
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        Tensor& da = t.node(aid).grad;
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
    });
}

Var Tape::hadamard(Var a, Var b) {
    check_owned(a);
    check_owned(b);
    const Tensor& av = node(a.id_).value;
    const Tensor& bv = node(b.id_).value;
    check_same_shape("hadamard", av, bv);
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
    const int aid = a.id_, bid = b.id_;
    const bool req = node(aid).requires_grad || node(bid).requires_grad;
    return push(std::move(out), {aid, bid}, req, [aid, bid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& avr = t.node(aid).value;
        const Tensor& bvr = t.node(bid).value;
        if (t.node(aid).requires_grad) {
            Tensor& da = t.node(aid).grad;
            for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * bvr.data[i];
        }
        if (t.node(bid).requires_grad) {
            Tensor& db = t.node(bid).grad;
            for (size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i] * avr.data[i];
        }
    });
}

Var Tape::relu(Var a) {
    check_owned(a);
    Tensor out = node(a.id_).value;
    for (double& x : out.data) x = x > 0.0 ? x : 0.0;
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& av = t.node(aid).value;
        Tensor& da = t.node(aid).grad;
        for (size_t i = 0; i < g.data.size(); ++i) {
            if (av.data[i] > 0.0) da.data[i] += g.data[i];
        }
    });
}

Var Tape::tanh(Var a) {
    check_owned(a);
    Tensor out = node(a.id_).value;
    for (double& x : out.data) x = std::tanh(x);
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& y = t.node(self).value;
        Tensor& da = t.node(aid).grad;
        for (size_t i = 0; i < g.data.size(); ++i) {
            da.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        }
    });
}

Var Tape::sigmoid(Var a) {
    check_owned(a);
    Tensor out = node(a.id_).value;
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& y = t.node(self).value;
        Tensor& da = t.node(aid).grad;
        for (size_t i = 0; i < g.data.size(); ++i) {
            da.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        }
    });
}

Var Tape::softmax(Var a, int axis) {
    check_owned(a);
    const Tensor& av = node(a.id_).value;
    const AxisView v = axis_view(av.shape, axis);
    Tensor out = av;
    for (size_t o = 0; o < v.outer; ++o) {
        for (size_t in = 0; in < v.inner; ++in) {
            const size_t base = o * v.extent * v.inner + in;
            double mx = av.data[base];
            for (size_t e = 1; e < v.extent; ++e) {
                mx = std::max(mx, av.data[base + e * v.inner]);
            }
            double denom = 0.0;
            for (size_t e = 0; e < v.extent; ++e) {
                const double ex = std::exp(av.data[base + e * v.inner] - mx);
                out.data[base + e * v.inner] = ex;
                denom += ex;
            }
            for (size_t e = 0; e < v.extent; ++e) out.data[base + e * v.inner] /= denom;
        }
    }
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid, v](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& y = t.node(self).value;
        Tensor& da = t.node(aid).grad;
        for (size_t o = 0; o < v.outer; ++o) {
            for (size_t in = 0; in < v.inner; ++in) {
                const size_t base = o * v.extent * v.inner + in;
                double dot = 0.0;
                for (size_t e = 0; e < v.extent; ++e) {
                    const size_t ix = base + e * v.inner;
                    dot += g.data[ix] * y.data[ix];
                }
                for (size_t e = 0; e < v.extent; ++e) {
                    const size_t ix = base + e * v.inner;
                    da.data[ix] += y.data[ix] * (g.data[ix] - dot);
                }
            }
        }
    });
}

Var Tape::sum(Var a) {
    check_owned(a);
    const Tensor& av = node(a.id_).value;
    double s = 0.0;
    for (double x : av.data) s += x;
    const int aid = a.id_;
    return push(Tensor::scalar(s), {aid}, node(aid).requires_grad, [aid](Tape& t, int self) {
        const double g = t.node(self).grad.data[0];
        Tensor& da = t.node(aid).grad;
        for (double& x : da.data) x += g;
    });
}

Var Tape::mean(Var a) {
    check_owned(a);
    const Tensor& av = node(a.id_).value;
    if (av.data.empty()) throw ShapeMismatchError("mean of empty tensor");
    double s = 0.0;
    for (double x : av.data) s += x;
    const double inv = 1.0 / static_cast<double>(av.data.size());
    const int aid = a.id_;
    return push(Tensor::scalar(s * inv), {aid}, node(aid).requires_grad,
                [aid, inv](Tape& t, int self) {
                    const double g = t.node(self).grad.data[0] * inv;
                    Tensor& da = t.node(aid).grad;
                    for (double& x : da.data) x += g;
                });
}

Var Tape::mean_axis(Var a, int axis) {
    check_owned(a);
    const Tensor& av = node(a.id_).value;
    const AxisView v = axis_view(av.shape, axis);
    if (v.extent == 0) throw ShapeMismatchError("mean_axis over empty extent");
    std::vector<int> out_shape;
    for (int i = 0; i < av.ndim(); ++i) {
        if (i != axis) out_shape.push_back(av.shape[i]);
    }
    if (out_shape.empty()) out_shape = {1};
    Tensor out = Tensor::zeros(out_shape);
    const double inv = 1.0 / static_cast<double>(v.extent);
    for (size_t o = 0; o < v.outer; ++o) {
        for (size_t e = 0; e < v.extent; ++e) {
            for (size_t in = 0; in < v.inner; ++in) {
                out.data[o * v.inner + in] += av.data[(o * v.extent + e) * v.inner + in] * inv;
            }
        }
    }
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid, v, inv](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        Tensor& da = t.node(aid).grad;
        for (size_t o = 0; o < v.outer; ++o) {
            for (size_t e = 0; e < v.extent; ++e) {
                for (size_t in = 0; in < v.inner; ++in) {
                    da.data[(o * v.extent + e) * v.inner + in] += g.data[o * v.inner + in] * inv;
                }
            }
        }
    });
}

Var Tape::max_over_set(const std::vector<Var>& xs) {
    if (xs.empty()) throw EmptyEnsembleError("max_over_set of empty member list");
    for (Var x : xs) check_owned(x);
    const Tensor& first = node(xs[0].id_).value;
    std::vector<int> ids;
    bool req = false;
    for (Var x : xs) {
        check_same_shape("max_over_set", first, node(x.id_).value);
        ids.push_back(x.id_);
        req = req || node(x.id_).requires_grad;
    }
    Tensor out = first;
    std::vector<int> argmax(first.data.size(), 0);
    for (size_t k = 1; k < ids.size(); ++k) {
        const Tensor& xv = node(ids[k]).value;
        for (size_t i = 0; i < out.data.size(); ++i) {
            if (xv.data[i] > out.data[i]) {  // strict: ties stay with lowest index
                out.data[i] = xv.data[i];
                argmax[i] = static_cast<int>(k);
            }
        }
    }
    return push(std::move(out), ids, req,
                [ids, argmax = std::move(argmax)](Tape& t, int self) {
                    const Tensor& g = t.node(self).grad;
                    for (size_t i = 0; i < g.data.size(); ++i) {
                        const int owner = ids[static_cast<size_t>(argmax[i])];
                        if (t.node(owner).requires_grad) {
                            t.node(owner).grad.data[i] += g.data[i];
                        }
                    }
                });
}

Var Tape::slice(Var a, int axis, int start, int len) {
    check_owned(a);
    const Tensor& av = node(a.id_).value;
    const AxisView v = axis_view(av.shape, axis);
    if (start < 0 || len < 0 || start + len > static_cast<int>(v.extent)) {
        throw ShapeMismatchError("slice [" + std::to_string(start) + ", " +
                                 std::to_string(start + len) + ") out of range for axis extent " +
                                 std::to_string(v.extent));
    }
    std::vector<int> out_shape = av.shape;
    out_shape[static_cast<size_t>(axis)] = len;
    Tensor out = Tensor::zeros(out_shape);
    for (size_t o = 0; o < v.outer; ++o) {
        for (int e = 0; e < len; ++e) {
            for (size_t in = 0; in < v.inner; ++in) {
                out.data[(o * len + e) * v.inner + in] =
                    av.data[(o * v.extent + start + e) * v.inner + in];
            }
        }
    }
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad,
                [aid, v, start, len](Tape& t, int self) {
                    const Tensor& g = t.node(self).grad;
                    Tensor& da = t.node(aid).grad;
                    for (size_t o = 0; o < v.outer; ++o) {
                        for (int e = 0; e < len; ++e) {
                            for (size_t in = 0; in < v.inner; ++in) {
                                da.data[(o * v.extent + start + e) * v.inner + in] +=
                                    g.data[(o * len + e) * v.inner + in];
                            }
                        }
                    }
                });
}

Var Tape::concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw ShapeMismatchError("concat of empty list");
    for (Var x : xs) check_owned(x);
    const Tensor& first = node(xs[0].id_).value;
    std::vector<int> out_shape = first.shape;
    const AxisView v0 = axis_view(first.shape, axis);
    size_t total_extent = 0;
    std::vector<int> ids;
    std::vector<size_t> extents;
    bool req = false;
    for (Var x : xs) {
        const Tensor& xv = node(x.id_).value;
        if (xv.ndim() != first.ndim()) {
            throw ShapeMismatchError("concat: rank mismatch " + shape_str(xv.shape) + " vs " +
                                     shape_str(first.shape));
        }
        for (int i = 0; i < xv.ndim(); ++i) {
            if (i != axis && xv.shape[i] != first.shape[i]) {
                throw ShapeMismatchError("concat: shape mismatch off axis " + shape_str(xv.shape) +
                                         " vs " + shape_str(first.shape));
            }
        }
        ids.push_back(x.id_);
        extents.push_back(static_cast<size_t>(xv.shape[axis]));
        total_extent += extents.back();
        req = req || node(x.id_).requires_grad;
    }
    out_shape[static_cast<size_t>(axis)] = static_cast<int>(total_extent);
    Tensor out = Tensor::zeros(out_shape);
    size_t offset = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
        const Tensor& xv = node(ids[k]).value;
        const size_t ext = extents[k];
        for (size_t o = 0; o < v0.outer; ++o) {
            for (size_t e = 0; e < ext; ++e) {
                for (size_t in = 0; in < v0.inner; ++in) {
                    out.data[(o * total_extent + offset + e) * v0.inner + in] =
                        xv.data[(o * ext + e) * v0.inner + in];
                }
            }
        }
        offset += ext;
    }
    return push(std::move(out), ids, req,
                [ids, extents, total_extent, v0](Tape& t, int self) {
                    const Tensor& g = t.node(self).grad;
                    size_t off = 0;
                    for (size_t k = 0; k < ids.size(); ++k) {
                        const size_t ext = extents[k];
                        if (t.node(ids[k]).requires_grad) {
                            Tensor& da = t.node(ids[k]).grad;
                            for (size_t o = 0; o < v0.outer; ++o) {
                                for (size_t e = 0; e < ext; ++e) {
                                    for (size_t in = 0; in < v0.inner; ++in) {
                                        da.data[(o * ext + e) * v0.inner + in] +=
                                            g.data[(o * total_extent + off + e) * v0.inner + in];
                                    }
                                }
                            }
                        }
                        off += ext;
                    }
                });
}

Var Tape::conv1d(Var x, Var w, Var b) {
    check_owned(x);
    check_owned(w);
    check_owned(b);
    const Tensor& xv = node(x.id_).value;
    const Tensor& wv = node(w.id_).value;
    const Tensor& bv = node(b.id_).value;
    if (xv.ndim() != 3 || wv.ndim() != 3 || bv.ndim() != 1) {
        throw ShapeMismatchError("conv1d expects x[B,W,C], w[K,C,F], b[F]; got " +
                                 shape_str(xv.shape) + ", " + shape_str(wv.shape) + ", " +
                                 shape_str(bv.shape));
    }
    const int batch = xv.shape[0], width = xv.shape[1], chans = xv.shape[2];
    const int kernel = wv.shape[0], feats = wv.shape[2];
    if (wv.shape[1] != chans || bv.shape[0] != feats) {
        throw ShapeMismatchError("conv1d channel/feature mismatch: x " + shape_str(xv.shape) +
                                 ", w " + shape_str(wv.shape) + ", b " + shape_str(bv.shape));
    }
    if (width < kernel) {
        throw ShapeMismatchError("conv1d input width " + std::to_string(width) +
                                 " shorter than kernel " + std::to_string(kernel));
    }
    const int out_w = width - kernel + 1;
    Tensor out = Tensor::zeros({batch, out_w, feats});
    for (int bi = 0; bi < batch; ++bi) {
        for (int t = 0; t < out_w; ++t) {
            for (int f = 0; f < feats; ++f) {
                double acc = bv.data[static_cast<size_t>(f)];
                for (int k = 0; k < kernel; ++k) {
                    for (int c = 0; c < chans; ++c) {
                        acc += xv.at3(bi, t + k, c) * wv.at3(k, c, f);
                    }
                }
                out.at3(bi, t, f) = acc;
            }
        }
    }
    const int xid = x.id_, wid = w.id_, bid = b.id_;
    const bool req =
        node(xid).requires_grad || node(wid).requires_grad || node(bid).requires_grad;
    return push(std::move(out), {xid, wid, bid}, req,
                [xid, wid, bid, batch, out_w, feats, kernel, chans](Tape& t, int self) {
                    const Tensor& g = t.node(self).grad;
                    const Tensor& xvr = t.node(xid).value;
                    const Tensor& wvr = t.node(wid).value;
                    const bool need_x = t.node(xid).requires_grad;
                    const bool need_w = t.node(wid).requires_grad;
                    const bool need_b = t.node(bid).requires_grad;
                    for (int bi = 0; bi < batch; ++bi) {
                        for (int ti = 0; ti < out_w; ++ti) {
                            for (int f = 0; f < feats; ++f) {
                                const double gv = g.at3(bi, ti, f);
                                if (gv == 0.0) continue;
                                if (need_b) t.node(bid).grad.data[static_cast<size_t>(f)] += gv;
                                for (int k = 0; k < kernel; ++k) {
                                    for (int c = 0; c < chans; ++c) {
                                        if (need_x) {
                                            t.node(xid).grad.at3(bi, ti + k, c) +=
                                                gv * wvr.at3(k, c, f);
                                        }
                                        if (need_w) {
                                            t.node(wid).grad.at3(k, c, f) +=
                                                gv * xvr.at3(bi, ti + k, c);
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
}

Var Tape::transpose(Var a) {
    check_owned(a);
    const Tensor& av = node(a.id_).value;
    if (av.ndim() != 2) throw ShapeMismatchError("transpose expects 2D, got " + shape_str(av.shape));
    const int r = av.shape[0], c = av.shape[1];
    Tensor out = Tensor::zeros({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at2(j, i) = av.at2(i, j);
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid, r, c](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        Tensor& da = t.node(aid).grad;
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) da.at2(i, j) += g.at2(j, i);
    });
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    check_owned(a);
    const Tensor& av = node(a.id_).value;
    if (shape_size(shape) != av.size()) {
        throw ShapeMismatchError("reshape " + shape_str(av.shape) + " -> " + shape_str(shape) +
                                 " changes element count");
    }
    Tensor out(std::move(shape), av.data);
    const int aid = a.id_;
    return push(std::move(out), {aid}, node(aid).requires_grad, [aid](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        Tensor& da = t.node(aid).grad;
        for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
    });
}

Var Tape::add_rowvec(Var m, Var v) {
    check_owned(m);
    check_owned(v);
    const Tensor& mv = node(m.id_).value;
    const Tensor& vv = node(v.id_).value;
    if (mv.ndim() != 2 || vv.ndim() != 1 || vv.shape[0] != mv.shape[1]) {
        throw ShapeMismatchError("add_rowvec: " + shape_str(mv.shape) + " + " +
                                 shape_str(vv.shape));
    }
    const int r = mv.shape[0], c = mv.shape[1];
    Tensor out = mv;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at2(i, j) += vv.data[static_cast<size_t>(j)];
    const int mid = m.id_, vid = v.id_;
    const bool req = node(mid).requires_grad || node(vid).requires_grad;
    return push(std::move(out), {mid, vid}, req, [mid, vid, r, c](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.node(mid).requires_grad) {
            Tensor& dm = t.node(mid).grad;
            for (size_t i = 0; i < g.data.size(); ++i) dm.data[i] += g.data[i];
        }
        if (t.node(vid).requires_grad) {
            Tensor& dv = t.node(vid).grad;
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) dv.data[static_cast<size_t>(j)] += g.at2(i, j);
        }
    });
}

void Tape::backward(Var loss) {
    check_owned(loss);
    if (backward_done_) {
        throw Error("backward already ran on this tape; record a fresh forward pass");
    }
    const Node& ln = node(loss.id_);
    if (ln.value.size() != 1) {
        throw NotScalarError("backward needs a scalar loss, got shape " +
                             shape_str(ln.value.shape));
    }
    backward_done_ = true;

    // Mark ancestors of the loss.
    std::vector<bool> needed(nodes_.size(), false);
    std::vector<int> stack = {loss.id_};
    needed[static_cast<size_t>(loss.id_)] = true;
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        for (int p : node(id).parents) {
            if (!needed[static_cast<size_t>(p)]) {
                needed[static_cast<size_t>(p)] = true;
                stack.push_back(p);
            }
        }
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (needed[i] && nodes_[i].requires_grad) {
            nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
        }
    }
    if (!ln.requires_grad) return;  // loss is constant w.r.t. every leaf
    node(loss.id_).grad.data[0] = 1.0;
    for (int id = loss.id_; id >= 0; --id) {
        Node& n = node(id);
        if (needed[static_cast<size_t>(id)] && n.requires_grad && n.pullback) {
            n.pullback(*this, id);
        }
    }
}

double finite_difference_check(const TensorFn& f, const std::vector<Tensor>& inputs, double h) {
    if (h <= 0.0) throw Error("finite difference step must be positive");

    std::vector<double> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const Tensor& x : inputs) vars.push_back(tape.leaf(x, true));
        Var loss = f(tape, vars);
        if (loss.value().size() != 1) {
            throw NotScalarError("finite_difference_check needs a scalar-valued function");
        }
        tape.backward(loss);
        for (Var v : vars) {
            const Tensor& g = v.grad();
            analytic.insert(analytic.end(), g.data.begin(), g.data.end());
        }
    }

    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(xs.size());
        for (const Tensor& x : xs) vars.push_back(tape.leaf(x, false));
        return f(tape, vars).value().data[0];
    };

    double max_err = 0.0;
    size_t flat = 0;
    std::vector<Tensor> probe = inputs;
    for (size_t a = 0; a < inputs.size(); ++a) {
        for (size_t e = 0; e < inputs[a].data.size(); ++e, ++flat) {
            const double saved = probe[a].data[e];
            probe[a].data[e] = saved + h;
            const double up = eval(probe);
            probe[a].data[e] = saved - h;
            const double down = eval(probe);
            probe[a].data[e] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double an = analytic[flat];
            const double err =
                std::abs(an - numeric) / std::max({1.0, std::abs(an), std::abs(numeric)});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace topo
