#pragma once

#include <functional>
#include <string>
#include <vector>

#include "topo/errors.hpp"

namespace topo {

// Dense row-major double tensor.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);

    int size() const { return static_cast<int>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }
    double& at2(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at2(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& at3(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at3(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
};

std::string shape_str(const std::vector<int>& shape);
int shape_size(const std::vector<int>& shape);

class Tape;

// Handle to a node recorded on a tape. Cheap to copy; valid as long as the
// tape is alive.
class Var {
public:
    Var() = default;

    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }
    const std::vector<int>& shape() const;
    const Tensor& value() const;
    const Tensor& grad() const;

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Records primitive applications in execution order; one backward pass per
// recording. Single-threaded by construction.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    Var matmul(Var a, Var b);            // [M,K] x [K,N] -> [M,N]
    Var add(Var a, Var b);               // same shape
    Var sub(Var a, Var b);               // same shape
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var hadamard(Var a, Var b);          // same shape
    Var relu(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var softmax(Var a, int axis);
    Var sum(Var a);                      // -> [1]
    Var mean(Var a);                     // -> [1]
    Var mean_axis(Var a, int axis);
    Var max_over_set(const std::vector<Var>& xs);  // elementwise, ties to lowest index
    Var slice(Var a, int axis, int start, int len);
    Var concat(const std::vector<Var>& xs, int axis);
    Var conv1d(Var x, Var w, Var b);     // [B,W,C] * [K,C,F] + [F] -> [B,W-K+1,F]
    Var transpose(Var a);                // 2D
    Var reshape(Var a, std::vector<int> shape);
    Var add_rowvec(Var m, Var v);        // [R,C] + [C] broadcast over rows

    // Populates gradients of every leaf the scalar loss depends on.
    // Throws NotScalarError unless loss has exactly one element; throws Error
    // on a second backward over the same recording.
    void backward(Var loss);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        std::function<void(Tape&, int)> pullback;  // (tape, own id)
        bool requires_grad = false;
    };

    Var push(Tensor value, std::vector<int> parents, bool requires_grad,
             std::function<void(Tape&, int)> pullback);
    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    void check_owned(Var v) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Central-difference gradient check. Runs f once with gradients, then probes
// every input element at +-h and compares. Returns the max over elements of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
using TensorFn = std::function<Var(Tape&, const std::vector<Var>&)>;
double finite_difference_check(const TensorFn& f, const std::vector<Tensor>& inputs,
                               double h = 1e-5);

}  // namespace topo
