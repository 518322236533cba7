#include "enkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "enkd/errors.hpp"

namespace enkd::metrics {

namespace {

std::size_t argmax_row(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
        if (row[k] > row[best]) best = k;  // strict: ties keep the lowest index
    }
    return best;
}

}  // namespace

double error_rate(const Matrix& pred_probs, std::span<const int> labels) {
    if (pred_probs.rows() == 0) throw ShapeError("error_rate: empty input");
    if (pred_probs.rows() != labels.size()) {
        throw ShapeError("error_rate: prediction/label count mismatch");
    }
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (argmax_row(pred_probs.row(i)) != static_cast<std::size_t>(labels[i])) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double ece(const Matrix& pred_probs, std::span<const int> labels, std::size_t bins) {
    if (pred_probs.rows() == 0) throw ShapeError("ece: empty input");
    if (pred_probs.rows() != labels.size()) throw ShapeError("ece: count mismatch");
    if (bins < 1) throw ConfigError("ece: need at least one bin");

    std::vector<double> bin_conf(bins, 0.0);
    std::vector<double> bin_acc(bins, 0.0);
    std::vector<std::size_t> bin_n(bins, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::span<const double> row = pred_probs.row(i);
        const std::size_t pred = argmax_row(row);
        const double conf = row[pred];
        // bins partition (0, 1] right-inclusively: bin b covers (b/B, (b+1)/B]
        std::size_t b = static_cast<std::size_t>(
            std::ceil(conf * static_cast<double>(bins))) ;
        b = b == 0 ? 0 : b - 1;
        b = std::min(b, bins - 1);
        bin_conf[b] += conf;
        bin_acc[b] += pred == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
        bin_n[b] += 1;
    }
    double out = 0.0;
    const double n = static_cast<double>(labels.size());
    for (std::size_t b = 0; b < bins; ++b) {
        if (bin_n[b] == 0) continue;
        const double nb = static_cast<double>(bin_n[b]);
        out += (nb / n) * std::abs(bin_acc[b] / nb - bin_conf[b] / nb);
    }
    return out;
}

double nll_gaussian(std::span<const models::MeanVar> predictions,
                    std::span<const double> targets) {
    if (predictions.empty()) throw ShapeError("nll_gaussian: empty input");
    if (predictions.size() != targets.size()) throw ShapeError("nll_gaussian: count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& p = predictions[i];
        if (!(p.var > 0.0)) throw NumericError("nll_gaussian: non-positive variance");
        const double gap = p.mean - targets[i];
        total += 0.5 * (gap * gap / p.var + std::log(p.var) + std::log(2.0 * std::numbers::pi));
    }
    return total / static_cast<double>(targets.size());
}

double Histogram::bin_left(std::size_t i) const {
    return lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(bins);
}

double Histogram::bin_right(std::size_t i) const {
    return i + 1 == bins ? hi : bin_left(i + 1);
}

Histogram build_histogram(std::span<const double> values, std::size_t bins, double lo,
                          double hi) {
    if (bins < 1) throw ConfigError("build_histogram: need at least one bin");
    if (!(lo < hi)) throw ConfigError("build_histogram: need lo < hi");
    Histogram h;
    h.bins = bins;
    h.lo = lo;
    h.hi = hi;
    h.masses.assign(bins, 0.0);
    h.count = values.size();
    if (values.empty()) return h;  // flagged empty, all-zero masses
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double v : values) {
        std::size_t b;
        if (v <= lo) {
            b = 0;
        } else if (v >= hi) {
            b = bins - 1;
        } else {
            b = static_cast<std::size_t>((v - lo) / width);
            b = std::min(b, bins - 1);
        }
        h.masses[b] += 1.0;
    }
    for (double& m : h.masses) m /= static_cast<double>(values.size());
    return h;
}

double total_variation(const Histogram& a, const Histogram& b) {
    if (a.bins != b.bins || a.lo != b.lo || a.hi != b.hi) {
        throw ShapeError("total_variation: histograms use different binnings");
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < a.bins; ++i) tv += std::abs(a.masses[i] - b.masses[i]);
    return tv;
}

void write_histogram_csv(std::ostream& os, const Histogram& a, const Histogram& b) {
    if (a.bins != b.bins || a.lo != b.lo || a.hi != b.hi) {
        throw ShapeError("write_histogram_csv: histograms use different binnings");
    }
    os << "bin_left,bin_right,mass_a,mass_b\n";
    char buf[160];
    for (std::size_t i = 0; i < a.bins; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", a.bin_left(i),
                      a.bin_right(i), a.masses[i], b.masses[i]);
        os << buf;
    }
}

}  // namespace enkd::metrics
