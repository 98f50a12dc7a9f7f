#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kgeformer {

enum class Frequency { hourly, quarter_hourly, ten_minutely };

std::int64_t frequency_seconds(Frequency freq);
std::string to_string(Frequency freq);
Frequency parse_frequency(std::string_view text);

// Calendar marks per timestamp: month (1-12), day (1-31), weekday (Mon=0),
// hour (0-23) and, for sub-hourly data, a minute bucket.
constexpr std::size_t kMaxMarks = 5;
std::size_t mark_count(Frequency freq);
// Lookup-table sizes for each mark, in mark order.
std::vector<std::size_t> mark_cardinalities(Frequency freq);

using Marks = std::array<std::int32_t, kMaxMarks>;
Marks time_features(std::int64_t unix_seconds, Frequency freq);

// "YYYY-MM-DD HH:MM[:SS]" <-> seconds since 1970-01-01 00:00 (UTC, no zone).
std::int64_t parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t unix_seconds);

struct RawSeries {
  std::string name;
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;  // rows x channels, row-major
  std::vector<std::string> columns;
  Frequency freq = Frequency::hourly;

  std::size_t rows() const { return timestamps.size(); }
  std::size_t channels() const { return columns.size(); }
  double at(std::size_t row, std::size_t channel) const { return values[row * columns.size() + channel]; }
};

RawSeries parse_csv(std::string_view text, std::string name = {});
RawSeries load_csv(const std::string& path);
std::string to_csv(const RawSeries& series);

enum class SplitScheme { automatic, ratio, ett_months };
SplitScheme parse_split_scheme(std::string_view text);
std::string to_string(SplitScheme scheme);
// ETT-named datasets use the month split; everything else the 0.7/0.1/0.2 ratio.
SplitScheme resolve_split_scheme(SplitScheme scheme, std::string_view dataset_name);

// Row range [begin, end) of the series; val/test ranges include the L rows of
// context borrowed from the preceding partition.
struct Partition {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
};

struct SplitBorders {
  Partition train, val, test;
};

SplitBorders split(std::size_t rows, Frequency freq, SplitScheme scheme, std::size_t lookback, std::size_t horizon);

class StandardScaler {
 public:
  StandardScaler() = default;
  StandardScaler(std::vector<double> mean, std::vector<double> stddev);

  // Fits on rows [0, train_end) only.
  static StandardScaler fit(const RawSeries& series, std::size_t train_end);

  double apply(double value, std::size_t channel) const { return (value - mean_[channel]) / std_[channel]; }
  double invert(double value, std::size_t channel) const { return value * std_[channel] + mean_[channel]; }
  std::vector<double> apply_all(const RawSeries& series) const;

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }
  std::size_t channels() const { return mean_.size(); }

  static constexpr double kStdFloor = 1e-8;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

struct WindowShape {
  std::size_t lookback = 336;   // L
  std::size_t label_len = 48;
  std::size_t horizon = 96;     // H
  std::size_t decoder_len() const { return label_len + horizon; }
};

std::size_t window_count(std::size_t partition_rows, std::size_t lookback, std::size_t horizon);

struct WindowSample {
  std::size_t start = 0;  // first encoder row in the series
  std::vector<double> x_enc;  // L x M
  std::vector<double> x_dec;  // (label_len + H) x M, last H rows zero
  std::vector<std::int32_t> marks_enc;  // L x F
  std::vector<std::int32_t> marks_dec;  // (label_len + H) x F
  std::vector<double> y;  // H x M
};

// Standardized series plus precomputed marks; shared by window views.
struct PreparedSeries {
  std::string name;
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;  // standardized, rows x channels
  std::vector<std::int32_t> marks;  // rows x mark_count
  std::size_t channels = 0;
  std::size_t mark_width = 0;
  Frequency freq = Frequency::hourly;

  std::size_t rows() const { return timestamps.size(); }
};

PreparedSeries prepare(const RawSeries& series, const StandardScaler& scaler);

// Stride-1 windows inside `partition`; window i has encoder rows
// [begin + i, begin + i + L) and target rows [begin + i + L, begin + i + L + H).
class WindowDataset {
 public:
  WindowDataset(std::shared_ptr<const PreparedSeries> series, Partition partition, WindowShape shape);

  std::size_t size() const { return count_; }
  const WindowShape& shape() const { return shape_; }
  const PreparedSeries& series() const { return *series_; }
  std::size_t start_row(std::size_t index) const { return partition_.begin + index; }
  WindowSample sample(std::size_t index) const;

 private:
  std::shared_ptr<const PreparedSeries> series_;
  Partition partition_;
  WindowShape shape_;
  std::size_t count_ = 0;
};

std::vector<WindowSample> make_windows(std::shared_ptr<const PreparedSeries> series, Partition partition,
                                       WindowShape shape);

}  // namespace kgeformer
