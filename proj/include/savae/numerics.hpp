// Copyright 2026 The SAVAE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "savae/rng.hpp"

namespace savae {

/// Shortest decimal text that reads back to the same double.
inline std::string format_shortest(double v)
{
    char buffer[32];
    const auto res = std::to_chars(buffer, buffer + sizeof buffer, v);
    return std::string(buffer, res.ptr);
}

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& logits)
{
    const double peak = logits.maxCoeff();
    return peak + std::log((logits.array() - peak).exp().sum());
}

template <class Derived>
Vector log_softmax(const Eigen::MatrixBase<Derived>& logits)
{
    return logits.array() - log_sum_exp(logits);
}

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

inline double sigmoid(double x) noexcept
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

template <class Derived>
void relu_in_place(Eigen::DenseBase<Derived>& values)
{
    values = values.derived().cwiseMax(0.0);
}

template <class Derived>
void sigmoid_in_place(Eigen::DenseBase<Derived>& values)
{
    values = values.derived().unaryExpr([](double x) { return sigmoid(x); });
}

/// Diagonal Gaussian q(z) = N(mu, diag(exp(log_var))).
struct GaussianPosterior {
    Vector mu;
    Vector log_var;

    Index dim() const noexcept { return mu.size(); }
};

/// z = mu + exp(0.5 log_var) * eps.
inline Vector sample_reparameterized(const GaussianPosterior& q, const Vector& eps)
{
    return q.mu.array() + (0.5 * q.log_var.array()).exp() * eps.array();
}

/// KL(q || N(0, I)) in closed form.
inline double kl_standard_normal(const GaussianPosterior& q)
{
    return 0.5
        * (q.mu.array().square() + q.log_var.array().exp() - q.log_var.array() - 1.0).sum();
}

inline Vector standard_normal_vector(CounterRng& rng, Index dim)
{
    Vector out(dim);
    rng.fill_normal({out.data(), static_cast<std::size_t>(dim)});
    return out;
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values)
{
    return values.derived().array().isFinite().all();
}

} // namespace savae
