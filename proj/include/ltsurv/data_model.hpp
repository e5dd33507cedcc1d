#ifndef LTSURV_DATA_MODEL_HPP
#define LTSURV_DATA_MODEL_HPP

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "math_utils.hpp"
#include "step_function.hpp"

namespace ltsurv {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingColumn : DataError {
    explicit MissingColumn(const std::string& col) : DataError("missing column: " + col) {}
};
struct ParseError : DataError {
    ParseError(std::size_t row, const std::string& col, const std::string& why)
        : DataError("parse error at row " + std::to_string(row) + ", column " + col + ": " + why),
          row(row), column(col) {}
    std::size_t row; // 1-based data row
    std::string column;
};
struct TruncationViolation : DataError {
    explicit TruncationViolation(std::size_t row)
        : DataError("truncation violation at row " + std::to_string(row) + ": w > y"), row(row) {}
    std::size_t row; // 1-based data row
};
struct EmptyDataset : DataError {
    EmptyDataset() : DataError("dataset has no records") {}
};
struct InvalidK : DataError {
    InvalidK(std::size_t K, std::size_t n)
        : DataError("invalid fold count K=" + std::to_string(K) + " for n=" + std::to_string(n)) {}
};

// ---------------------------------------------------------------------------
// Observed unit O = (Y, Delta, W, A, Z)
// ---------------------------------------------------------------------------
struct ObservedRecord {
    double y = 0.0;
    int delta = 1;
    double w = 0.0;
    int a = 1;
    std::vector<double> z;
};

struct Dataset {
    std::vector<ObservedRecord> records;
    std::vector<std::vector<double>> covariate_alphabet; // per z-dimension value sets

    std::size_t n() const { return records.size(); }
    std::size_t z_dim() const { return covariate_alphabet.size(); }

    void validate() const {
        if (records.empty()) throw EmptyDataset();
        for (std::size_t i = 0; i < records.size(); ++i) {
            const ObservedRecord& r = records[i];
            if (r.w < 0.0 || r.y < r.w) throw TruncationViolation(i + 1);
            if (r.delta != 0 && r.delta != 1) {
                throw ParseError(i + 1, "delta", "must be 0 or 1");
            }
            if (r.a != 0 && r.a != 1) throw ParseError(i + 1, "a", "must be 0 or 1");
            if (r.z.size() != covariate_alphabet.size()) {
                throw ParseError(i + 1, "z", "dimension mismatch");
            }
            for (std::size_t d = 0; d < r.z.size(); ++d) {
                const std::vector<double>& alpha = covariate_alphabet[d];
                if (std::find(alpha.begin(), alpha.end(), r.z[d]) == alpha.end()) {
                    throw ParseError(i + 1, "z" + std::to_string(d + 1), "value outside declared alphabet");
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Covariate stratum registry: maps each distinct z pattern to a stable id
// (lexicographic order), and (a, z_id) to the member record indices.
// ---------------------------------------------------------------------------
struct StratumIndex {
    std::vector<std::vector<double>> z_patterns;        // sorted lexicographically
    std::vector<int> z_id;                              // per record
    std::map<std::pair<int, int>, std::vector<std::size_t>> members; // (a, z_id) -> indices

    explicit StratumIndex(const Dataset& data) {
        std::vector<std::vector<double>> pats;
        pats.reserve(data.records.size());
        for (const ObservedRecord& r : data.records) pats.push_back(r.z);
        std::sort(pats.begin(), pats.end());
        pats.erase(std::unique(pats.begin(), pats.end()), pats.end());
        z_patterns = std::move(pats);
        z_id.resize(data.records.size());
        for (std::size_t i = 0; i < data.records.size(); ++i) {
            auto it = std::lower_bound(z_patterns.begin(), z_patterns.end(), data.records[i].z);
            z_id[i] = static_cast<int>(it - z_patterns.begin());
            members[{data.records[i].a, z_id[i]}].push_back(i);
        }
    }

    int id_of(const std::vector<double>& z) const {
        auto it = std::lower_bound(z_patterns.begin(), z_patterns.end(), z);
        if (it == z_patterns.end() || *it != z) return -1;
        return static_cast<int>(it - z_patterns.begin());
    }
};

// ---------------------------------------------------------------------------
// CSV ingestion. Header `y,delta,w,a,z1,...,zp`; the `a` and `w` columns may
// be omitted for degenerate-exposure / no-truncation datasets.
// ---------------------------------------------------------------------------
struct CsvSchema {
    std::vector<std::vector<double>> covariate_alphabet; // empty -> inferred from data
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParseError(row, col, "not a number: '" + s + "'");
    }
}

inline int parse_binary(const std::string& s, std::size_t row, const std::string& col) {
    const double v = parse_double(s, row, col);
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw ParseError(row, col, "must be 0 or 1");
}

} // namespace detail

inline Dataset ingest_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw EmptyDataset();
    const std::vector<std::string> cols = detail::split_csv_line(header);

    auto find_col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i] == name) return static_cast<int>(i);
        }
        return -1;
    };

    const int iy = find_col("y");
    const int id = find_col("delta");
    if (iy < 0) throw MissingColumn("y");
    if (id < 0) throw MissingColumn("delta");
    const int iw = find_col("w");
    const int ia = find_col("a");
    std::vector<int> iz;
    for (std::size_t p = 1;; ++p) {
        const int c = find_col("z" + std::to_string(p));
        if (c < 0) break;
        iz.push_back(c);
    }
    if (iz.empty()) throw MissingColumn("z1");

    Dataset data;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const std::vector<std::string> f = detail::split_csv_line(line);
        auto field = [&](int idx, const std::string& col) -> const std::string& {
            if (idx < 0 || static_cast<std::size_t>(idx) >= f.size()) {
                throw ParseError(row, col, "row too short");
            }
            return f[static_cast<std::size_t>(idx)];
        };
        ObservedRecord r;
        r.y = detail::parse_double(field(iy, "y"), row, "y");
        r.delta = detail::parse_binary(field(id, "delta"), row, "delta");
        r.w = iw >= 0 ? detail::parse_double(field(iw, "w"), row, "w") : 0.0;
        r.a = ia >= 0 ? detail::parse_binary(field(ia, "a"), row, "a") : 1;
        for (std::size_t p = 0; p < iz.size(); ++p) {
            r.z.push_back(detail::parse_double(field(iz[p], "z" + std::to_string(p + 1)), row,
                                               "z" + std::to_string(p + 1)));
        }
        if (r.w < 0.0 || r.y < r.w) throw TruncationViolation(row);
        data.records.push_back(std::move(r));
    }
    if (data.records.empty()) throw EmptyDataset();

    if (!schema.covariate_alphabet.empty()) {
        if (schema.covariate_alphabet.size() != iz.size()) {
            throw DataError("schema alphabet dimension does not match z columns");
        }
        data.covariate_alphabet = schema.covariate_alphabet;
    } else {
        data.covariate_alphabet.resize(iz.size());
        for (const ObservedRecord& r : data.records) {
            for (std::size_t d = 0; d < iz.size(); ++d) {
                std::vector<double>& alpha = data.covariate_alphabet[d];
                if (std::find(alpha.begin(), alpha.end(), r.z[d]) == alpha.end()) {
                    alpha.push_back(r.z[d]);
                }
            }
        }
        for (std::vector<double>& alpha : data.covariate_alphabet) std::sort(alpha.begin(), alpha.end());
    }
    data.validate();
    return data;
}

// ---------------------------------------------------------------------------
// Cross-fitting fold plan: deterministic function of (n, K, seed), fold sizes
// differ by at most one.
// ---------------------------------------------------------------------------
struct FoldPlan {
    std::size_t K = 2;
    std::vector<int> assignment; // record index -> fold label in [0, K)
    std::uint64_t seed = 0;

    std::size_t fold_size(int k) const {
        std::size_t c = 0;
        for (int a : assignment) {
            if (a == k) ++c;
        }
        return c;
    }
};

inline FoldPlan make_folds(std::size_t n, std::size_t K, std::uint64_t seed) {
    if (K < 2 || K > n) throw InvalidK(K, n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 eng(mix_keys(seed, {n, K, 0x666f6c6473ULL}));
    // Fisher-Yates with an explicit bounded draw so the plan is stable across
    // standard library implementations.
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(eng() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    FoldPlan plan;
    plan.K = K;
    plan.seed = seed;
    plan.assignment.assign(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos) {
        plan.assignment[idx[pos]] = static_cast<int>(pos % K);
    }
    return plan;
}

} // namespace ltsurv

#endif
