#pragma once

// Hot element loops in two flavours. `serial::` is the straightforward
// lexicographic reference kept for testing; `parallel::` is the OpenMP version
// used by the solvers. Parallel scatter-adds iterate the 8 parity colours of
// the element grid in a fixed order (same-colour elements share no node), so
// their output does not depend on the number of threads.

#include "infill/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace infill::kernels {

/// Neighbourhood stencil over elements: integer offsets and a weight each.
struct Stencil {
  std::vector<std::array<int, 3>> offsets;
  std::vector<double> weights;
};

/// Conic filter stencil, weights max(0, radius - distance) in element units.
Stencil conic_stencil(double radius);
/// Unit-weight ball stencil {offset : |offset| <= radius} in element units.
Stencil ball_stencil(double radius);

namespace serial {

/// y += sum_e modulus[e] * Ke * u_e over elements with modulus[e] != 0.
void apply_uniform_stiffness(const Grid& grid, std::span<const double> Ke, std::span<const double> modulus,
                             std::span<const double> u, std::span<double> y);
/// y += sum_e M_e * u_e with one 24x24 row-major matrix per element (empty entries skipped).
void apply_element_matrices(const Grid& grid, std::span<const double> matrices, std::span<const std::uint8_t> active,
                            std::span<const double> u, std::span<double> y);
/// out[e] = u_e^T Ke u_e for elements with mask[e], 0 otherwise.
void element_energy(const Grid& grid, std::span<const double> Ke, std::span<const std::uint8_t> mask,
                    std::span<const double> u, std::span<double> out);
/// out[e] = sum_i w_i x_{e+o_i} / sum_i w_i over neighbours with mask set (normalised weighted average).
void stencil_average(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                     std::span<const double> x, std::span<double> out);
/// Transpose of stencil_average: out[i] = sum_e w_ei / W_e * g[e].
void stencil_average_transpose(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                               std::span<const double> g, std::span<double> out);

}  // namespace serial

namespace parallel {

void apply_uniform_stiffness(const Grid& grid, std::span<const double> Ke, std::span<const double> modulus,
                             std::span<const double> u, std::span<double> y);
void apply_element_matrices(const Grid& grid, std::span<const double> matrices, std::span<const std::uint8_t> active,
                            std::span<const double> u, std::span<double> y);
void element_energy(const Grid& grid, std::span<const double> Ke, std::span<const std::uint8_t> mask,
                    std::span<const double> u, std::span<double> out);
void stencil_average(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                     std::span<const double> x, std::span<double> out);
void stencil_average_transpose(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                               std::span<const double> g, std::span<double> out);

}  // namespace parallel

}  // namespace infill::kernels
