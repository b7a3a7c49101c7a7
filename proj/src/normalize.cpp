#include "her/normalize.hpp"

#include <cmath>
#include <string>

#include "her/errors.hpp"

namespace her {

RunningNormalizer::RunningNormalizer(Eigen::Index dim, double clip, double variance_floor)
    : sum_(Vec::Zero(dim)), sum_sq_(Vec::Zero(dim)), clip_(clip), variance_floor_(variance_floor) {
    if (dim < 1) throw ConfigError("normalizer dimension must be positive");
    if (!(clip > 0.0)) throw ConfigError("normalizer clip must be positive");
    if (!(variance_floor > 0.0)) throw ConfigError("normalizer variance floor must be positive");
}

void RunningNormalizer::observe(const Mat& batch) {
    if (batch.rows() == 0) return;
    if (batch.cols() != dim())
        throw ShapeError("normalizer expects width " + std::to_string(dim()) + ", got " +
                         std::to_string(batch.cols()));
    count_ += batch.rows();
    sum_ += batch.colwise().sum().transpose();
    sum_sq_ += batch.array().square().matrix().colwise().sum().transpose();
}

void RunningNormalizer::observe(const Vec& x) {
    if (x.size() != dim())
        throw ShapeError("normalizer expects width " + std::to_string(dim()) + ", got " + std::to_string(x.size()));
    count_ += 1;
    sum_ += x;
    sum_sq_ += x.cwiseProduct(x);
}

void RunningNormalizer::merge(const RunningNormalizer& other) {
    if (other.dim() != dim()) throw ShapeError("cannot merge normalizers of different dimension");
    count_ += other.count_;
    sum_ += other.sum_;
    sum_sq_ += other.sum_sq_;
}

void RunningNormalizer::reset() {
    count_ = 0;
    sum_.setZero();
    sum_sq_.setZero();
}

Vec RunningNormalizer::mean() const {
    if (count_ == 0) return Vec::Zero(dim());
    return sum_ / double(count_);
}

Vec RunningNormalizer::stddev() const {
    const double floor = std::sqrt(variance_floor_);
    if (count_ == 0) return Vec::Constant(dim(), 1.0);
    const Vec mu = mean();
    Vec var = (sum_sq_ / double(count_) - mu.cwiseProduct(mu)).cwiseMax(0.0);
    return var.cwiseSqrt().cwiseMax(floor);
}

Vec RunningNormalizer::normalize(const Vec& x) const {
    if (x.size() != dim())
        throw ShapeError("normalize expects width " + std::to_string(dim()) + ", got " + std::to_string(x.size()));
    if (count_ == 0) return x.cwiseMax(-clip_).cwiseMin(clip_);
    Vec y = (x - mean()).cwiseProduct(stddev().cwiseInverse());
    return y.cwiseMax(-clip_).cwiseMin(clip_);
}

Mat RunningNormalizer::normalize_rows(const Mat& batch) const {
    if (batch.cols() != dim())
        throw ShapeError("normalize expects width " + std::to_string(dim()) + ", got " +
                         std::to_string(batch.cols()));
    if (count_ == 0) return batch.cwiseMax(-clip_).cwiseMin(clip_);
    const Vec mu = mean();
    const Vec inv = stddev().cwiseInverse();
    Mat y = batch.rowwise() - mu.transpose();
    y = y * inv.asDiagonal();
    return y.cwiseMax(-clip_).cwiseMin(clip_);
}

RunningNormalizer RunningNormalizer::from_stats(std::int64_t count, Vec sum, Vec sum_sq, double clip,
                                                double variance_floor) {
    if (sum.size() != sum_sq.size()) throw ShapeError("normalizer statistics have different lengths");
    RunningNormalizer n(sum.size(), clip, variance_floor);
    n.count_ = count;
    n.sum_ = std::move(sum);
    n.sum_sq_ = std::move(sum_sq);
    return n;
}

}  // namespace her
