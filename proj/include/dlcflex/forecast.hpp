#ifndef DLCFLEX_FORECAST_HPP
#define DLCFLEX_FORECAST_HPP

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlcflex/scenario.hpp"

namespace dlcflex {

// Daily weather aggregates used to match a day against the history.
struct DayFeatures {
    double mean_temp_c = 0;
    double irradiation_sum = 0;
};

struct MsdMatch {
    std::string date;
    int index = -1;  // position in the history vector
    double distance = 0;
    std::vector<double> inflexible_kw;  // matched day's total minus its flexible load
    double p_ref_kw = 0;                // matched day's average total power
};

inline std::vector<double> predict_inflexible(const HistoricalDay& day,
                                              const std::vector<double>& flexible_kw) {
    if (day.total_ts_kw_series.size() != flexible_kw.size())
        throw std::invalid_argument("predict_inflexible: series length mismatch (" +
                                    std::to_string(day.total_ts_kw_series.size()) + " vs " +
                                    std::to_string(flexible_kw.size()) + ")");
    std::vector<double> out(day.total_ts_kw_series.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = day.total_ts_kw_series[i] - flexible_kw[i];
    return out;
}

inline double compute_pref(const PrefPolicy& policy, const std::vector<double>& msd_total) {
    if (policy.kind == PrefPolicy::Kind::Fixed) return policy.fixed_kw;
    if (msd_total.empty()) return 0;
    const double sum = std::accumulate(msd_total.begin(), msd_total.end(), 0.0);
    return sum / static_cast<double>(msd_total.size());
}

// Nearest historical day by z-normalized Euclidean distance over the two
// daily aggregates; the normalization statistics come from the history itself
// (population standard deviation). A feature that is constant across the
// history cannot discriminate and is dropped from the distance. Ties go to
// the most recent day (latest date, then latest position).
inline MsdMatch select_msd(const DayFeatures& target,
                           const std::vector<HistoricalDay>& history) {
    if (history.empty()) throw std::invalid_argument("select_msd: empty history");
    const size_t n = history.size();
    double mean_t = 0, mean_i = 0;
    for (const auto& d : history) {
        mean_t += d.mean_temp_c;
        mean_i += d.irradiation_sum;
    }
    mean_t /= static_cast<double>(n);
    mean_i /= static_cast<double>(n);
    double var_t = 0, var_i = 0;
    for (const auto& d : history) {
        var_t += (d.mean_temp_c - mean_t) * (d.mean_temp_c - mean_t);
        var_i += (d.irradiation_sum - mean_i) * (d.irradiation_sum - mean_i);
    }
    const double sd_t = std::sqrt(var_t / static_cast<double>(n));
    const double sd_i = std::sqrt(var_i / static_cast<double>(n));

    int best = -1;
    double best_d2 = 0;
    for (size_t k = 0; k < n; ++k) {
        const auto& d = history[k];
        double d2 = 0;
        if (sd_t > 1e-12) {
            const double z = (target.mean_temp_c - d.mean_temp_c) / sd_t;
            d2 += z * z;
        }
        if (sd_i > 1e-12) {
            const double z = (target.irradiation_sum - d.irradiation_sum) / sd_i;
            d2 += z * z;
        }
        const bool newer = best >= 0 && (d.date > history[best].date ||
                                         (d.date == history[best].date &&
                                          static_cast<int>(k) > best));
        if (best < 0 || d2 < best_d2 || (d2 == best_d2 && newer)) {
            best = static_cast<int>(k);
            best_d2 = d2;
        }
    }

    MsdMatch m;
    m.index = best;
    m.date = history[best].date;
    m.distance = std::sqrt(best_d2);
    m.inflexible_kw = predict_inflexible(history[best], history[best].flexible_kw_series);
    m.p_ref_kw = compute_pref(PrefPolicy{}, history[best].total_ts_kw_series);
    return m;
}

}  // namespace dlcflex

#endif
