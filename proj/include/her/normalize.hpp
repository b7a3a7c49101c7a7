#pragma once

#include <cstdint>

#include "her/nncore.hpp"

namespace her {

/// Running mean / standard deviation over every observation seen so far,
/// kept as sufficient statistics so that independent normalizers can be merged.
class RunningNormalizer {
public:
    RunningNormalizer() = default;
    explicit RunningNormalizer(Eigen::Index dim, double clip = 5.0, double variance_floor = 1e-4);

    Eigen::Index dim() const { return sum_.size(); }
    std::int64_t count() const { return count_; }
    const Vec& sum() const { return sum_; }
    const Vec& sum_sq() const { return sum_sq_; }
    double clip() const { return clip_; }
    double variance_floor() const { return variance_floor_; }

    /// Rows of `batch` are observations.
    void observe(const Mat& batch);
    void observe(const Vec& x);

    /// Adds another normalizer's statistics (same dimension and settings).
    void merge(const RunningNormalizer& other);
    void reset();

    Vec mean() const;
    /// max(std, sqrt(variance_floor)) per coordinate.
    Vec stddev() const;

    Vec normalize(const Vec& x) const;
    Mat normalize_rows(const Mat& batch) const;

    /// Rebuilds a normalizer from serialized statistics.
    static RunningNormalizer from_stats(std::int64_t count, Vec sum, Vec sum_sq, double clip, double variance_floor);

    bool operator==(const RunningNormalizer&) const = default;

private:
    std::int64_t count_ = 0;
    Vec sum_;
    Vec sum_sq_;
    double clip_ = 5.0;
    double variance_floor_ = 1e-4;
};

}  // namespace her
