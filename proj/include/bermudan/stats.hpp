#pragma once

#include <cstddef>
#include <span>

namespace bermudan {

/// Welford accumulator for mean and sample variance.
class RunningStats {
public:
    void add(double x);
    void merge(const RunningStats& other);

    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    /// Sample variance with 1/(n-1) normalization; 0 for fewer than two samples.
    double variance() const;
    double sd() const;
    /// Standard error of the mean.
    double standard_error() const;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

RunningStats summarize(std::span<const double> xs);

double normal_cdf(double x);

/// Inverse of the standard normal CDF on (0, 1).
double normal_quantile(double p);

}  // namespace bermudan
