#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "enkd/matrix.hpp"
#include "enkd/models.hpp"

namespace enkd::metrics {

// Fraction of rows whose argmax disagrees with the label. Argmax ties break
// toward the lowest class index.
double error_rate(const Matrix& pred_probs, std::span<const int> labels);

// Expected calibration error with `bins` uniform bins over (0, 1],
// right-inclusive; empty bins contribute nothing.
double ece(const Matrix& pred_probs, std::span<const int> labels, std::size_t bins = 10);

// Mean of 0.5 * ((mu - y)^2 / var + log var + log 2*pi).
double nll_gaussian(std::span<const models::MeanVar> predictions,
                    std::span<const double> targets);

// Normalised histogram with uniform bins over [lo, hi]. Values outside the
// range land in the edge bins; a value exactly at the upper edge lands in
// the last bin.
struct Histogram {
    std::size_t bins = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> masses;
    std::size_t count = 0;

    bool empty() const { return count == 0; }
    double bin_left(std::size_t i) const;
    double bin_right(std::size_t i) const;
};

Histogram build_histogram(std::span<const double> values, std::size_t bins, double lo,
                          double hi);

// Sum of |mass_a(i) - mass_b(i)|. Histograms must share bin count and edges.
double total_variation(const Histogram& a, const Histogram& b);

// CSV export: bin_left,bin_right,mass_a,mass_b with 17 significant digits.
void write_histogram_csv(std::ostream& os, const Histogram& a, const Histogram& b);

}  // namespace enkd::metrics
