#pragma once

#include <array>
#include <cmath>
#include <utility>

#include "grainpipe/errors.hpp"

namespace grainpipe::detail {

/// Gaussian elimination with partial pivoting over an augmented N x (N+1)
/// system. Throws GeometryError on a (near-)singular matrix.
template <int N>
std::array<double, N> solve_linear(std::array<std::array<double, N + 1>, N> m) {
    for (int col = 0; col < N; ++col) {
        int pivot = col;
        for (int r = col + 1; r < N; ++r)
            if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        if (std::abs(m[pivot][col]) < 1e-12)
            throw GeometryError("solve_linear: singular system");
        std::swap(m[col], m[pivot]);
        for (int r = 0; r < N; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int c = col; c <= N; ++c) m[r][c] -= f * m[col][c];
        }
    }
    std::array<double, N> x{};
    for (int r = 0; r < N; ++r) x[r] = m[r][N] / m[r][r];
    return x;
}

} // namespace grainpipe::detail
