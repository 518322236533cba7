#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "enkd/matrix.hpp"
#include "enkd/rng.hpp"

namespace enkd {

// One dense layer: weight is (out, in), bias is (1, out).
struct LinearLayer {
    Matrix weight;
    Matrix bias;
};

// W*x + b for a single input vector.
std::vector<double> linear_forward(const LinearLayer& layer, std::span<const double> x);

std::vector<double> relu(std::span<const double> x);
Matrix relu(const Matrix& x);

// softmax(logits / temperature), stabilised by max-subtraction.
// temperature must be > 0.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

// Named parameter tensor with a gradient buffer of the same shape.
struct ParamTensor {
    std::string name;
    Matrix value;
    Matrix grad;
};

// Ordered collection of parameter tensors. Iteration order is the insertion
// order, which makes optimizer updates and checkpoints deterministic.
class ParamStore {
  public:
    std::size_t add(std::string name, Matrix init) {
        ParamTensor t;
        t.name = std::move(name);
        t.grad = Matrix(init.rows(), init.cols());
        t.value = std::move(init);
        tensors_.push_back(std::move(t));
        return tensors_.size() - 1;
    }

    ParamTensor& at(std::size_t i) { return tensors_[i]; }
    const ParamTensor& at(std::size_t i) const { return tensors_[i]; }

    std::size_t size() const { return tensors_.size(); }

    void zero_grads() {
        for (auto& t : tensors_) t.grad.fill(0.0);
    }

    std::size_t value_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t.value.size();
        return n;
    }

    double sum_squares() const {
        double s = 0.0;
        for (const auto& t : tensors_)
            for (double v : t.value.data()) s += v * v;
        return s;
    }

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

  private:
    std::vector<ParamTensor> tensors_;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for both weight and bias.
LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng);

}  // namespace enkd
