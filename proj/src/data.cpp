#include "kgeformer/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kgeformer/error.hpp"

namespace kgeformer {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string file_stem(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

std::int64_t frequency_seconds(Frequency freq) {
  switch (freq) {
    case Frequency::hourly: return 3600;
    case Frequency::quarter_hourly: return 900;
    case Frequency::ten_minutely: return 600;
  }
  return 3600;
}

std::string to_string(Frequency freq) {
  switch (freq) {
    case Frequency::hourly: return "hourly";
    case Frequency::quarter_hourly: return "quarter_hourly";
    case Frequency::ten_minutely: return "ten_minutely";
  }
  return "hourly";
}

Frequency parse_frequency(std::string_view text) {
  if (text == "hourly" || text == "h") return Frequency::hourly;
  if (text == "quarter_hourly" || text == "15min" || text == "t") return Frequency::quarter_hourly;
  if (text == "ten_minutely" || text == "10min") return Frequency::ten_minutely;
  fail(ErrorKind::config, "unknown frequency '" + std::string(text) + "'");
}

std::size_t mark_count(Frequency freq) { return freq == Frequency::hourly ? 4 : 5; }

std::vector<std::size_t> mark_cardinalities(Frequency freq) {
  std::vector<std::size_t> sizes{13, 32, 7, 24};
  if (freq == Frequency::quarter_hourly) sizes.push_back(4);
  if (freq == Frequency::ten_minutely) sizes.push_back(6);
  return sizes;
}

Marks time_features(std::int64_t unix_seconds, Frequency freq) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{unix_seconds}};
  const sys_days day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  Marks m{};
  m[0] = static_cast<std::int32_t>(static_cast<unsigned>(ymd.month()));
  m[1] = static_cast<std::int32_t>(static_cast<unsigned>(ymd.day()));
  m[2] = static_cast<std::int32_t>(weekday{day}.iso_encoding()) - 1;
  m[3] = static_cast<std::int32_t>(hms.hours().count());
  const auto minute = static_cast<std::int32_t>(hms.minutes().count());
  if (freq == Frequency::quarter_hourly) m[4] = minute / 15;
  if (freq == Frequency::ten_minutely) m[4] = minute / 10;
  return m;
}

std::int64_t parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  const std::string_view s = trim(text);
  // YYYY-MM-DD HH:MM or YYYY-MM-DD HH:MM:SS
  auto bad = [&]() -> std::int64_t {
    fail(ErrorKind::parse, "unparseable timestamp '" + std::string(text) + "' (expected YYYY-MM-DD HH:MM[:SS])");
  };
  if (s.size() != 16 && s.size() != 19) return bad();
  if (s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':') return bad();
  if (s.size() == 19 && s[16] != ':') return bad();
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, se = 0;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) || !parse_int(s.substr(8, 2), d) ||
      !parse_int(s.substr(11, 2), h) || !parse_int(s.substr(14, 2), mi)) {
    return bad();
  }
  if (s.size() == 19 && !parse_int(s.substr(17, 2), se)) return bad();
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 59) return bad();
  const sys_seconds tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{se};
  return tp.time_since_epoch().count();
}

std::string format_timestamp(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{unix_seconds}};
  const sys_days day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

RawSeries parse_csv(std::string_view text, std::string name) {
  RawSeries series;
  series.name = std::move(name);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (!header_seen && line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (!header_seen) {
      if (cells.size() < 2 || cells[0] != "date") {
        fail(ErrorKind::parse, "line " + std::to_string(line_no) +
                                   ": header must start with a 'date' column followed by feature columns");
      }
      for (std::size_t i = 1; i < cells.size(); ++i) series.columns.emplace_back(cells[i]);
      header_seen = true;
      continue;
    }
    if (cells.size() != series.columns.size() + 1) {
      fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(series.columns.size() + 1) + " cells, found " +
                                 std::to_string(cells.size()));
    }
    std::int64_t ts = 0;
    try {
      ts = parse_timestamp(cells[0]);
    } catch (const Error& e) {
      fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!series.timestamps.empty() && ts <= series.timestamps.back()) {
      fail(ErrorKind::validation, "line " + std::to_string(line_no) + ": timestamps are not strictly increasing");
    }
    series.timestamps.push_back(ts);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      double v = 0.0;
      const auto cell = cells[i];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": unparseable or missing value '" +
                                   std::string(cell) + "' in column '" + series.columns[i - 1] + "'");
      }
      series.values.push_back(v);
    }
  }
  if (!header_seen) fail(ErrorKind::parse, "empty CSV");
  if (series.rows() < 2) fail(ErrorKind::validation, "CSV needs at least two rows to establish a frequency");

  const std::int64_t delta = series.timestamps[1] - series.timestamps[0];
  bool known = false;
  for (Frequency f : {Frequency::hourly, Frequency::quarter_hourly, Frequency::ten_minutely}) {
    if (frequency_seconds(f) == delta) {
      series.freq = f;
      known = true;
    }
  }
  if (!known) {
    fail(ErrorKind::validation, "unsupported sampling interval of " + std::to_string(delta) +
                                    " s (supported: 1 hour, 15 min, 10 min)");
  }
  for (std::size_t r = 2; r < series.rows(); ++r) {
    if (series.timestamps[r] - series.timestamps[r - 1] != delta) {
      // +2: header line plus one-based numbering
      fail(ErrorKind::validation, "line " + std::to_string(r + 2) + " (" + format_timestamp(series.timestamps[r]) +
                                      ") breaks the " + to_string(series.freq) + " frequency");
    }
  }
  return series;
}

RawSeries load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open dataset '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_csv(buffer.str(), file_stem(path));
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

std::string to_csv(const RawSeries& series) {
  std::string out = "date";
  for (const auto& c : series.columns) out += "," + c;
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < series.rows(); ++r) {
    out += format_timestamp(series.timestamps[r]);
    for (std::size_t c = 0; c < series.channels(); ++c) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, series.at(r, c));
      out += ',';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

SplitScheme parse_split_scheme(std::string_view text) {
  if (text == "auto") return SplitScheme::automatic;
  if (text == "ratio") return SplitScheme::ratio;
  if (text == "ett_months") return SplitScheme::ett_months;
  fail(ErrorKind::config, "unknown split scheme '" + std::string(text) + "' (auto, ratio, ett_months)");
}

std::string to_string(SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::automatic: return "auto";
    case SplitScheme::ratio: return "ratio";
    case SplitScheme::ett_months: return "ett_months";
  }
  return "auto";
}

SplitScheme resolve_split_scheme(SplitScheme scheme, std::string_view dataset_name) {
  if (scheme != SplitScheme::automatic) return scheme;
  return dataset_name.starts_with("ETT") ? SplitScheme::ett_months : SplitScheme::ratio;
}

SplitBorders split(std::size_t rows, Frequency freq, SplitScheme scheme, std::size_t lookback, std::size_t horizon) {
  std::size_t train_end = 0, val_end = 0, test_end = 0;
  if (scheme == SplitScheme::ett_months) {
    const std::size_t per_month = 30 * 24 * static_cast<std::size_t>(3600 / frequency_seconds(freq));
    train_end = 12 * per_month;
    val_end = 16 * per_month;
    test_end = 20 * per_month;
    if (rows < test_end) {
      fail(ErrorKind::config, "ett_months split needs " + std::to_string(test_end) + " rows, dataset has " +
                                  std::to_string(rows));
    }
  } else if (scheme == SplitScheme::ratio) {
    train_end = static_cast<std::size_t>(static_cast<double>(rows) * 0.7);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(rows) * 0.2);
    val_end = rows - n_test;
    test_end = rows;
  } else {
    fail(ErrorKind::config, "split scheme must be resolved before splitting");
  }
  if (train_end < lookback) {
    fail(ErrorKind::config, "training partition (" + std::to_string(train_end) + " rows) is shorter than L=" +
                                std::to_string(lookback));
  }
  SplitBorders b;
  b.train = {0, train_end};
  b.val = {train_end - lookback, val_end};
  b.test = {val_end - lookback, test_end};
  const std::size_t need = lookback + horizon;
  auto check = [need](const Partition& p, const char* name) {
    if (p.length() < need) {
      fail(ErrorKind::config, std::string(name) + " partition has " + std::to_string(p.length()) +
                                  " rows including context; L+H = " + std::to_string(need) + " required");
    }
  };
  check(b.train, "train");
  check(b.val, "validation");
  check(b.test, "test");
  return b;
}

StandardScaler::StandardScaler(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
  if (mean_.size() != std_.size()) fail(ErrorKind::shape, "scaler mean/std length mismatch");
  for (double& s : std_) s = std::max(s, kStdFloor);
}

StandardScaler StandardScaler::fit(const RawSeries& series, std::size_t train_end) {
  const std::size_t m = series.channels();
  if (train_end == 0 || train_end > series.rows()) fail(ErrorKind::config, "scaler fit range is empty or too long");
  std::vector<double> mean(m, 0.0), var(m, 0.0);
  for (std::size_t r = 0; r < train_end; ++r)
    for (std::size_t c = 0; c < m; ++c) mean[c] += series.at(r, c);
  for (double& v : mean) v /= static_cast<double>(train_end);
  for (std::size_t r = 0; r < train_end; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      const double d = series.at(r, c) - mean[c];
      var[c] += d * d;
    }
  std::vector<double> stddev(m);
  for (std::size_t c = 0; c < m; ++c) stddev[c] = std::sqrt(var[c] / static_cast<double>(train_end));
  return StandardScaler(std::move(mean), std::move(stddev));
}

std::vector<double> StandardScaler::apply_all(const RawSeries& series) const {
  if (series.channels() != channels()) {
    fail(ErrorKind::validation, "scaler expects " + std::to_string(channels()) + " channels, found " +
                                    std::to_string(series.channels()));
  }
  std::vector<double> out(series.values.size());
  const std::size_t m = channels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(series.values[i], i % m);
  return out;
}

PreparedSeries prepare(const RawSeries& series, const StandardScaler& scaler) {
  PreparedSeries p;
  p.name = series.name;
  p.timestamps = series.timestamps;
  p.values = scaler.apply_all(series);
  p.channels = series.channels();
  p.freq = series.freq;
  p.mark_width = mark_count(series.freq);
  p.marks.reserve(series.rows() * p.mark_width);
  for (std::int64_t ts : series.timestamps) {
    const Marks m = time_features(ts, series.freq);
    p.marks.insert(p.marks.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(p.mark_width));
  }
  return p;
}

std::size_t window_count(std::size_t partition_rows, std::size_t lookback, std::size_t horizon) {
  if (partition_rows < lookback + horizon) return 0;
  return partition_rows - lookback - horizon + 1;
}

WindowDataset::WindowDataset(std::shared_ptr<const PreparedSeries> series, Partition partition, WindowShape shape)
    : series_(std::move(series)), partition_(partition), shape_(shape) {
  if (shape_.lookback == 0 || shape_.horizon == 0) fail(ErrorKind::config, "L and H must be positive");
  if (shape_.label_len > shape_.lookback) {
    fail(ErrorKind::config, "label_len (" + std::to_string(shape_.label_len) + ") cannot exceed L (" +
                                std::to_string(shape_.lookback) + ")");
  }
  if (partition_.end > series_->rows() || partition_.begin > partition_.end) {
    fail(ErrorKind::config, "partition exceeds the series");
  }
  if (partition_.length() < shape_.lookback + shape_.horizon) {
    fail(ErrorKind::config, "partition of " + std::to_string(partition_.length()) + " rows is shorter than L+H = " +
                                std::to_string(shape_.lookback + shape_.horizon));
  }
  count_ = window_count(partition_.length(), shape_.lookback, shape_.horizon);
}

WindowSample WindowDataset::sample(std::size_t index) const {
  if (index >= count_) fail(ErrorKind::contract, "window index out of range");
  const PreparedSeries& s = *series_;
  const std::size_t m = s.channels, f = s.mark_width;
  const std::size_t L = shape_.lookback, H = shape_.horizon, lab = shape_.label_len;
  const std::size_t start = partition_.begin + index;
  const std::size_t target = start + L;

  WindowSample w;
  w.start = start;
  w.x_enc.assign(s.values.begin() + static_cast<std::ptrdiff_t>(start * m),
                 s.values.begin() + static_cast<std::ptrdiff_t>(target * m));
  w.y.assign(s.values.begin() + static_cast<std::ptrdiff_t>(target * m),
             s.values.begin() + static_cast<std::ptrdiff_t>((target + H) * m));
  w.x_dec.assign((lab + H) * m, 0.0);
  std::copy(s.values.begin() + static_cast<std::ptrdiff_t>((target - lab) * m),
            s.values.begin() + static_cast<std::ptrdiff_t>(target * m), w.x_dec.begin());
  w.marks_enc.assign(s.marks.begin() + static_cast<std::ptrdiff_t>(start * f),
                     s.marks.begin() + static_cast<std::ptrdiff_t>(target * f));
  w.marks_dec.assign(s.marks.begin() + static_cast<std::ptrdiff_t>((target - lab) * f),
                     s.marks.begin() + static_cast<std::ptrdiff_t>((target + H) * f));
  return w;
}

std::vector<WindowSample> make_windows(std::shared_ptr<const PreparedSeries> series, Partition partition,
                                       WindowShape shape) {
  WindowDataset ds(std::move(series), partition, shape);
  std::vector<WindowSample> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(ds.sample(i));
  return out;
}

}  // namespace kgeformer
