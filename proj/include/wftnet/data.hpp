#pragma once

// CSV ingestion and dataset plumbing: chronological 70/10/20 splits,
// train-statistics standardization, stride-1 window sampling, and the two
// evaluation metrics. CSV dialect: ',' separator, '.' decimal, header row;
// a first column headed "date" (case-insensitive) is kept as timestamps.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace wftnet {

struct SeriesTable {
    std::vector<std::string> timestamps; // empty when the file has no date column
    std::vector<std::string> channel_names;
    Tensor values; // [N, C]

    std::size_t rows() const { return values.rank() == 2 ? values.shape[0] : 0; }
    std::size_t channels() const { return values.rank() == 2 ? values.shape[1] : 0; }
    bool has_timestamps() const { return !timestamps.empty(); }
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline bool iequals(const std::string& a, const char* b) {
    std::size_t i = 0;
    for (; i < a.size() && b[i] != '\0'; ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return i == a.size() && b[i] == '\0';
}

// row/col are 1-based file coordinates for error messages.
inline double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string s = trim(raw);
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw DataError("csv: unparsable cell '" + s + "' at row " + std::to_string(row) +
                        ", column " + std::to_string(col));
    if (!std::isfinite(v))
        throw DataError("csv: non-finite value at row " + std::to_string(row) + ", column " +
                        std::to_string(col));
    return v;
}

} // namespace detail

inline SeriesTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: " + path + " has no header row");
    std::vector<std::string> header = detail::split_fields(line);
    for (std::string& h : header) h = detail::trim(h);
    if (header.empty() || (header.size() == 1 && header[0].empty()))
        throw FormatError("csv: " + path + " has an empty header row");

    const bool dated = detail::iequals(header[0], "date");
    const std::size_t first_value_col = dated ? 1 : 0;
    if (header.size() <= first_value_col)
        throw FormatError("csv: " + path + " has no value columns");

    SeriesTable table;
    table.channel_names.assign(header.begin() + static_cast<std::ptrdiff_t>(first_value_col),
                               header.end());
    const std::size_t C = table.channel_names.size();

    std::vector<double> flat;
    std::size_t row = 1; // header was file row 1
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const std::vector<std::string> fields = detail::split_fields(line);
        if (fields.size() != header.size())
            throw FormatError("csv: row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(header.size()));
        if (dated) table.timestamps.push_back(detail::trim(fields[0]));
        for (std::size_t c = 0; c < C; ++c)
            flat.push_back(detail::parse_cell(fields[first_value_col + c], row, first_value_col + c + 1));
    }
    if (flat.empty()) throw FormatError("csv: " + path + " has no data rows");
    const std::size_t n_rows = flat.size() / C; // before the move below
    table.values = Tensor(Shape{n_rows, C}, std::move(flat));
    return table;
}

// ----- splits ---------------------------------------------------------------

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;

    void validate() const {
        if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
            throw ConfigError("split: fractions must be positive");
        if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
            throw ConfigError("split: fractions must sum to 1");
    }
};

struct RowRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

struct Splits {
    RowRange train, val, test;
};

// Chronological train -> val -> test with boundaries floor(train*N) and
// floor((train+val)*N). Each split must hold at least one full window.
inline Splits split(const SeriesTable& table, const SplitSpec& spec, std::size_t window_len) {
    spec.validate();
    if (window_len < 1) throw ConfigError("split: window length must be >= 1");
    const std::size_t N = table.rows();
    // A relative guard so sums like 0.7 + 0.1 floor to the intended boundary
    // instead of one row short of it.
    const auto boundary = [N](double frac) {
        return static_cast<std::size_t>(frac * static_cast<double>(N) * (1.0 + 1e-12));
    };
    const std::size_t b1 = boundary(spec.train_frac);
    const std::size_t b2 = boundary(spec.train_frac + spec.val_frac);
    Splits s;
    s.train = {0, b1};
    s.val = {b1, b2};
    s.test = {b2, N};
    for (const auto& [name, range] :
         {std::pair<const char*, RowRange>{"train", s.train}, {"val", s.val}, {"test", s.test}})
        if (range.size() < window_len)
            throw ConfigError("split: " + std::string(name) + " range [" +
                              std::to_string(range.begin) + ", " + std::to_string(range.end) +
                              ") cannot hold a window of " + std::to_string(window_len) + " rows");
    return s;
}

// ----- standardization --------------------------------------------------------

struct StandardizeStats {
    std::vector<double> mean;  // [C]
    std::vector<double> stdev; // [C], floored at 1e-5
};

// Z-scores every row using train-range statistics only.
inline std::pair<SeriesTable, StandardizeStats> standardize(const SeriesTable& table,
                                                            RowRange train) {
    const std::size_t N = table.rows(), C = table.channels();
    if (train.size() == 0 || train.end > N)
        throw ConfigError("standardize: bad train range [" + std::to_string(train.begin) + ", " +
                          std::to_string(train.end) + ") for " + std::to_string(N) + " rows");
    StandardizeStats stats;
    stats.mean.assign(C, 0.0);
    stats.stdev.assign(C, 0.0);
    const double inv_n = 1.0 / static_cast<double>(train.size());
    for (std::size_t c = 0; c < C; ++c) {
        double mu = 0.0;
        for (std::size_t r = train.begin; r < train.end; ++r) mu += table.values.data[r * C + c];
        mu *= inv_n;
        double var = 0.0;
        for (std::size_t r = train.begin; r < train.end; ++r) {
            const double d = table.values.data[r * C + c] - mu;
            var += d * d;
        }
        var *= inv_n;
        stats.mean[c] = mu;
        stats.stdev[c] = std::max(std::sqrt(var), 1e-5);
    }
    SeriesTable out = table;
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = 0; c < C; ++c)
            out.values.data[r * C + c] = (table.values.data[r * C + c] - stats.mean[c]) / stats.stdev[c];
    return {std::move(out), std::move(stats)};
}

// Apply existing statistics (e.g. from a checkpoint) to every row.
inline SeriesTable standardize_with(const SeriesTable& table, const StandardizeStats& stats) {
    const std::size_t N = table.rows(), C = table.channels();
    if (stats.mean.size() != C || stats.stdev.size() != C)
        throw DimensionError("standardize_with: stats for " + std::to_string(stats.mean.size()) +
                             " channels, table has " + std::to_string(C));
    SeriesTable out = table;
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = 0; c < C; ++c)
            out.values.data[r * C + c] = (table.values.data[r * C + c] - stats.mean[c]) / stats.stdev[c];
    return out;
}

// ----- window sampling ---------------------------------------------------------

// Stride-1 start offsets of full windows inside one split.
struct WindowSampler {
    RowRange range;
    std::size_t window_len = 0;

    WindowSampler(RowRange r, std::size_t win) : range(r), window_len(win) {
        if (win < 1) throw ConfigError("WindowSampler: window length must be >= 1");
        if (r.size() < win)
            throw ConfigError("WindowSampler: range of " + std::to_string(r.size()) +
                              " rows cannot hold a window of " + std::to_string(win));
    }

    std::size_t count() const { return range.size() - window_len + 1; }
    std::size_t start(std::size_t i) const { return range.begin + i; }
};

// Copy rows [start, start+len) into a fresh [len, C] tensor.
inline Tensor window_rows(const SeriesTable& table, std::size_t start, std::size_t len) {
    const std::size_t C = table.channels();
    if (start + len > table.rows())
        throw DimensionError("window_rows: rows [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of range");
    Tensor w(Shape{len, C});
    std::copy(table.values.data.begin() + static_cast<std::ptrdiff_t>(start * C),
              table.values.data.begin() + static_cast<std::ptrdiff_t>((start + len) * C),
              w.data.begin());
    return w;
}

// ----- metrics -----------------------------------------------------------------

inline double mse(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw DimensionError("mse: shape mismatch " + shape_str(pred.shape) + " vs " +
                             shape_str(target.shape));
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

inline double mae(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw DimensionError("mae: shape mismatch " + shape_str(pred.shape) + " vs " +
                             shape_str(target.shape));
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) acc += std::abs(pred.data[i] - target.data[i]);
    return acc / static_cast<double>(pred.numel());
}

} // namespace wftnet
