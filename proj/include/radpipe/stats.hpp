#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "radpipe/table.hpp"

namespace radpipe {

// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

namespace detail {

inline double normal_sf_two_sided(double z) {
    // 2 * (1 - Phi(z)) for z >= 0
    return std::erfc(z / std::sqrt(2.0));
}

// regularized incomplete gamma, series expansion for P(a,x)
inline double gamma_p_series(double a, double x) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// continued fraction for Q(a,x), valid for x >= a+1
inline double gamma_q_cf(double a, double x) {
    const double fpmin = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / fpmin, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Chi-square survival function, P(X >= x) with df degrees of freedom.
inline double chi2_sf(double x, int df) {
    if (df < 1) throw std::runtime_error("chi2_sf: df must be >= 1");
    if (x <= 0.0) return 1.0;
    double a = df / 2.0, xx = x / 2.0;
    double q = xx < a + 1.0 ? 1.0 - detail::gamma_p_series(a, xx) : detail::gamma_q_cf(a, xx);
    return std::clamp(q, 0.0, 1.0);
}

struct MannWhitneyResult {
    double u = 0.0;  // U statistic of group1
    double p = 1.0;  // two-sided, normal approximation
};

// Rank-sum U with tie-corrected normal approximation and 0.5 continuity
// correction.
inline MannWhitneyResult mann_whitney_u(const std::vector<double>& group0,
                                        const std::vector<double>& group1) {
    const double n0 = static_cast<double>(group0.size());
    const double n1 = static_cast<double>(group1.size());
    if (group0.size() < 2 || group1.size() < 2)
        throw std::runtime_error("mann_whitney_u: each group needs >= 2 values");

    std::vector<double> pooled = group0;
    pooled.insert(pooled.end(), group1.begin(), group1.end());
    auto ranks = average_ranks(pooled);
    double r1 = 0.0;
    for (std::size_t i = group0.size(); i < pooled.size(); ++i) r1 += ranks[i];
    const double u1 = r1 - n1 * (n1 + 1.0) / 2.0;

    const double n = n0 + n1;
    std::map<double, double> tie_counts;
    for (double v : pooled) tie_counts[v] += 1.0;
    double tie_term = 0.0;
    for (const auto& [_, t] : tie_counts) tie_term += t * t * t - t;

    const double mu = n0 * n1 / 2.0;
    const double var = n0 * n1 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    MannWhitneyResult res;
    res.u = u1;
    if (var <= 0.0) {
        res.p = 1.0;  // every value tied
        return res;
    }
    double z = (std::abs(u1 - mu) - 0.5) / std::sqrt(var);
    if (z < 0.0) z = 0.0;
    res.p = std::clamp(detail::normal_sf_two_sided(z), 0.0, 1.0);
    return res;
}

struct Chi2Result {
    double chi2 = 0.0;
    double p = 1.0;
};

// Pearson chi-squared over the 2 x K contingency table, df = K - 1.
inline Chi2Result chi2_independence(const std::vector<int>& categories,
                                    const std::vector<int>& labels) {
    if (categories.size() != labels.size() || categories.empty())
        throw std::runtime_error("chi2_independence: size mismatch");
    std::map<int, std::array<double, 2>> table;  // category -> counts per class
    std::array<double, 2> class_tot{0.0, 0.0};
    for (std::size_t i = 0; i < categories.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw std::runtime_error("chi2_independence: labels must be 0/1");
        table[categories[i]][static_cast<std::size_t>(labels[i])] += 1.0;
        class_tot[static_cast<std::size_t>(labels[i])] += 1.0;
    }
    if (table.size() < 2) throw std::runtime_error("chi2_independence: single category");
    if (class_tot[0] == 0.0 || class_tot[1] == 0.0)
        throw std::runtime_error("chi2_independence: empty label class");

    const double n = class_tot[0] + class_tot[1];
    double chi2 = 0.0;
    for (const auto& [_, obs] : table) {
        double cat_tot = obs[0] + obs[1];
        for (int c = 0; c < 2; ++c) {
            double expected = cat_tot * class_tot[static_cast<std::size_t>(c)] / n;
            if (expected <= 0.0)
                throw std::runtime_error("chi2_independence: zero expected count");
            double d = obs[static_cast<std::size_t>(c)] - expected;
            chi2 += d * d / expected;
        }
    }
    return {chi2, chi2_sf(chi2, static_cast<int>(table.size()) - 1)};
}

// Pearson correlation of average ranks.
inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 3)
        throw std::runtime_error("spearman_rho: need equal lengths >= 3");
    auto ra = average_ranks(a);
    auto rb = average_ranks(b);
    double ma = vec_mean(ra), mb = vec_mean(rb);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da < 1e-12 || db < 1e-12)
        throw std::runtime_error("spearman_rho: constant input vector");
    return std::clamp(num / std::sqrt(da * db), -1.0, 1.0);
}

enum class TestKind { mann_whitney, chi_squared };

struct FeatureScreen {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    TestKind test = TestKind::mann_whitney;
    double statistic = 0.0;
    double p_value = 1.0;
    bool degenerate = false;  // constant feature, p = 1 by convention
};

struct ScreeningResult {
    std::vector<FeatureScreen> entries;  // table column order

    const FeatureScreen& by_name(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw std::runtime_error("screening: no such feature " + name);
    }
};

// Univariate screening on the given rows only: Mann-Whitney for continuous
// features, Pearson chi-squared for categorical ones. Constant features get
// p = 1 and a degenerate flag instead of an error.
inline ScreeningResult univariate_screen(const FeatureTable& t, const std::vector<int>& rows) {
    if (rows.empty()) throw std::runtime_error("univariate_screen: no rows");
    int c0 = 0, c1 = 0;
    for (int r : rows) (t.labels[static_cast<std::size_t>(r)] == 1 ? c1 : c0)++;
    if (c0 == 0 || c1 == 0)
        throw std::runtime_error("univariate_screen: both classes required");

    ScreeningResult out;
    for (std::size_t j = 0; j < t.n_features(); ++j) {
        FeatureScreen s;
        s.name = t.feature_names[j];
        s.kind = t.kinds[j];
        auto col = t.column(static_cast<int>(j), rows);
        auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        if (*hi - *lo < 1e-12) {
            s.degenerate = true;
            s.p_value = 1.0;
            s.test = s.kind == FeatureKind::categorical ? TestKind::chi_squared
                                                        : TestKind::mann_whitney;
            out.entries.push_back(std::move(s));
            continue;
        }
        if (s.kind == FeatureKind::categorical) {
            std::vector<int> cats, labs;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                cats.push_back(static_cast<int>(std::llround(col[i])));
                labs.push_back(t.labels[static_cast<std::size_t>(rows[i])]);
            }
            auto r = chi2_independence(cats, labs);
            s.test = TestKind::chi_squared;
            s.statistic = r.chi2;
            s.p_value = r.p;
        } else {
            std::vector<double> g0, g1;
            for (std::size_t i = 0; i < rows.size(); ++i)
                (t.labels[static_cast<std::size_t>(rows[i])] == 1 ? g1 : g0).push_back(col[i]);
            auto r = mann_whitney_u(g0, g1);
            s.test = TestKind::mann_whitney;
            s.statistic = r.u;
            s.p_value = r.p;
        }
        out.entries.push_back(std::move(s));
    }
    return out;
}

// Greedy redundancy filter: walk features by ascending p (ties by name); keep
// a continuous feature iff |spearman| <= threshold against every kept
// continuous feature. Categorical features pass through unfiltered.
inline std::vector<std::string> redundancy_filter(const FeatureTable& t,
                                                  const std::vector<int>& rows,
                                                  const ScreeningResult& screening,
                                                  double threshold) {
    if (!(threshold > 0.0) || threshold > 1.0)
        throw std::runtime_error("redundancy_filter: threshold must be in (0,1]");
    if (screening.entries.size() != t.n_features())
        throw std::runtime_error("redundancy_filter: screening does not cover the table");

    std::vector<std::size_t> order(screening.entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ea = screening.entries[a];
        const auto& eb = screening.entries[b];
        if (ea.p_value != eb.p_value) return ea.p_value < eb.p_value;
        return ea.name < eb.name;
    });

    // rank vectors cached per continuous column; constant columns correlate
    // with nothing by convention
    std::vector<std::vector<double>> ranks(t.n_features());
    auto ranks_of = [&](std::size_t j) -> const std::vector<double>& {
        if (ranks[j].empty()) ranks[j] = average_ranks(t.column(static_cast<int>(j), rows));
        return ranks[j];
    };
    auto rank_corr = [&](std::size_t a, std::size_t b) {
        const auto& ra = ranks_of(a);
        const auto& rb = ranks_of(b);
        double ma = vec_mean(ra), mb = vec_mean(rb), num = 0, da = 0, db = 0;
        for (std::size_t i = 0; i < ra.size(); ++i) {
            num += (ra[i] - ma) * (rb[i] - mb);
            da += (ra[i] - ma) * (ra[i] - ma);
            db += (rb[i] - mb) * (rb[i] - mb);
        }
        if (da < 1e-12 || db < 1e-12) return 0.0;
        return num / std::sqrt(da * db);
    };

    std::vector<std::string> kept;
    std::vector<std::size_t> kept_continuous;
    for (std::size_t idx : order) {
        std::size_t col = 0;
        for (std::size_t j = 0; j < t.n_features(); ++j)
            if (t.feature_names[j] == screening.entries[idx].name) col = j;
        if (t.kinds[col] == FeatureKind::categorical) {
            kept.push_back(t.feature_names[col]);
            continue;
        }
        bool ok = true;
        for (std::size_t other : kept_continuous)
            if (std::abs(rank_corr(col, other)) > threshold) {
                ok = false;
                break;
            }
        if (ok) {
            kept.push_back(t.feature_names[col]);
            kept_continuous.push_back(col);
        }
    }
    return kept;
}

// Screen report CSV: feature, kind, statistic, p_value, kept(0/1).
inline void write_screen_report(const std::filesystem::path& path, const ScreeningResult& screening,
                                const std::vector<std::string>& kept) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "feature,kind,statistic,p_value,kept\n";
    for (const auto& e : screening.entries) {
        bool is_kept = std::find(kept.begin(), kept.end(), e.name) != kept.end();
        out << e.name << ',' << (e.kind == FeatureKind::categorical ? "categorical" : "continuous")
            << ',' << fmt_double(e.statistic) << ',' << fmt_double(e.p_value) << ','
            << (is_kept ? 1 : 0) << '\n';
    }
}

}  // namespace radpipe
