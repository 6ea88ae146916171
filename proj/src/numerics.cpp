#include "resdecomp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "resdecomp/errors.hpp"
#include "resdecomp/rng.hpp"

namespace resdecomp {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

}  // namespace

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match shape " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    }
}

double dot(std::span<const float> a, std::span<const float> b) {
    require_same_length(a.size(), b.size(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

Vector matvec(const Matrix& w, std::span<const float> x) {
    return matvec_columns(w, 0, w.cols(), x);
}

Vector matvec_columns(const Matrix& w, std::size_t col_begin, std::size_t col_end,
                      std::span<const float> x) {
    if (col_begin > col_end || col_end > w.cols()) {
        throw DimensionError("matvec_columns: column range out of bounds");
    }
    require_same_length(col_end - col_begin, x.size(), "matvec");
    Vector out(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        out[r] = static_cast<float>(dot(w.row(r).subspan(col_begin, col_end - col_begin), x));
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_same_length(a.cols(), b.rows(), "matmul");
    const Matrix bt = transpose(b);
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            out(i, j) = static_cast<float>(dot(a.row(i), bt.row(j)));
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

double root_mean_square(std::span<const float> x, float eps) {
    if (x.empty()) {
        throw DimensionError("root_mean_square: empty input");
    }
    const double mean_sq = dot(x, x) / static_cast<double>(x.size());
    return std::sqrt(mean_sq + static_cast<double>(eps));
}

Vector rms_norm(std::span<const float> x, std::span<const float> gamma, float eps) {
    require_same_length(x.size(), gamma.size(), "rms_norm");
    if (eps < 0.0f) {
        throw InputError("rms_norm: eps must be non-negative");
    }
    const double rms = root_mean_square(x, eps);
    if (rms == 0.0) {
        throw SingularNormError("rms_norm: zero vector with eps = 0");
    }
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(x[i]) * gamma[i] / rms);
    }
    return out;
}

std::vector<double> softmax_stable(std::span<const double> logits) {
    if (logits.empty()) {
        throw DimensionError("softmax_stable: empty input");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

Vector softmax_stable(std::span<const float> logits) {
    std::vector<double> wide(logits.begin(), logits.end());
    const std::vector<double> probs = softmax_stable(std::span<const double>(wide));
    return Vector(probs.begin(), probs.end());
}

double cross_entropy(std::span<const double> probs, std::size_t gold) {
    if (gold >= probs.size()) {
        throw IndexError("cross_entropy: gold label " + std::to_string(gold) +
                         " out of range for " + std::to_string(probs.size()) + " classes");
    }
    return -std::log(std::max(probs[gold], kProbabilityFloor));
}

double cross_entropy(std::span<const float> probs, std::size_t gold) {
    std::vector<double> wide(probs.begin(), probs.end());
    return cross_entropy(std::span<const double>(wide), gold);
}

std::size_t argmax(std::span<const float> v) {
    if (v.empty()) {
        throw DimensionError("argmax: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) {
        throw DimensionError("argmax: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

void add_inplace(std::span<float> acc, std::span<const float> x) {
    require_same_length(acc.size(), x.size(), "add_inplace");
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += x[i];
    }
}

bool all_finite(std::span<const float> v) {
    return std::all_of(v.begin(), v.end(), [](float f) { return std::isfinite(f); });
}

}  // namespace resdecomp
