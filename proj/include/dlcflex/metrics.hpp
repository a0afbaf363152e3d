#ifndef DLCFLEX_METRICS_HPP
#define DLCFLEX_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dlcflex/csv.hpp"
#include "dlcflex/scenario.hpp"

namespace dlcflex {

// Direction of the transformer-station peak under evaluation: consumption
// peaks are maxima of total power, injection peaks maxima of backfeed
// (negated total power).
enum class PeakKind { Consumption, Injection };

inline std::string to_string(PeakKind k) {
    return k == PeakKind::Consumption ? "consumption" : "injection";
}

inline PeakKind parse_peak_kind(const std::string& s) {
    if (s == "consumption") return PeakKind::Consumption;
    if (s == "injection") return PeakKind::Injection;
    throw ValidationError("unknown peak kind '" + s + "' (use consumption or injection)");
}

// Per-calendar-day peak of a total-power series. Days are aligned to the
// grid's start-of-day clock; start_step says where in the scenario the series
// begins. Partial days at either end are excluded and reported via *warning.
inline std::vector<double> daily_peaks(const std::vector<double>& p_total_kw,
                                       const TimeGrid& grid, PeakKind kind, long start_step = 0,
                                       std::string* warning = nullptr) {
    if (warning) warning->clear();
    const int k = grid.steps_per_day;
    const long n = static_cast<long>(p_total_kw.size());
    const long sod0 = (grid.start_step_of_day() + start_step) % k;
    const long lead = (k - sod0) % k;
    const long full_days = lead <= n ? (n - lead) / k : 0;
    const long tail = lead <= n ? (n - lead) % k : n;
    if (warning) {
        std::string w;
        if (lead > 0 && full_days > 0)
            w += "excluded " + std::to_string(std::min(lead, n)) + "-step partial leading day";
        if (tail > 0) {
            if (!w.empty()) w += "; ";
            w += "excluded " + std::to_string(tail) + "-step partial final day";
        }
        *warning = w;
    }
    std::vector<double> peaks;
    peaks.reserve(static_cast<size_t>(full_days));
    for (long d = 0; d < full_days; ++d) {
        double peak = -std::numeric_limits<double>::infinity();
        for (long i = 0; i < k; ++i) {
            const double p = p_total_kw[static_cast<size_t>(lead + d * k + i)];
            peak = std::max(peak, kind == PeakKind::Consumption ? p : -p);
        }
        peaks.push_back(peak);
    }
    return peaks;
}

// Reduction of daily peaks against a baseline run. The ratio normalizes the
// mean daily reduction by the fleet's total water-heater nominal power and is
// NaN when that power is zero.
struct PeakSummary {
    PeakKind kind = PeakKind::Consumption;
    std::vector<double> baseline_daily_kw;
    std::vector<double> scheme_daily_kw;
    double mean_daily_reduction_kw = 0.0;
    double max_reduction_kw = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();
};

inline PeakSummary peak_reduction(const std::vector<double>& scheme_daily,
                                  const std::vector<double>& baseline_daily, PeakKind kind,
                                  double ewh_nom_total_kw) {
    if (scheme_daily.size() != baseline_daily.size())
        throw ValidationError("daily peak lists differ: scheme has " +
                              std::to_string(scheme_daily.size()) + " days, baseline " +
                              std::to_string(baseline_daily.size()));
    if (scheme_daily.empty()) throw ValidationError("no full evaluation days");
    PeakSummary s;
    s.kind = kind;
    s.baseline_daily_kw = baseline_daily;
    s.scheme_daily_kw = scheme_daily;
    double sum = 0;
    for (size_t d = 0; d < scheme_daily.size(); ++d) sum += baseline_daily[d] - scheme_daily[d];
    s.mean_daily_reduction_kw = sum / static_cast<double>(scheme_daily.size());
    s.max_reduction_kw = *std::max_element(baseline_daily.begin(), baseline_daily.end()) -
                         *std::max_element(scheme_daily.begin(), scheme_daily.end());
    if (ewh_nom_total_kw > 0) s.ratio = s.mean_daily_reduction_kw / ewh_nom_total_kw;
    return s;
}

// Power values sorted in descending order.
inline std::vector<double> duration_curve(const std::vector<double>& p_total_kw) {
    std::vector<double> out = p_total_kw;
    std::sort(out.begin(), out.end(), std::greater<double>());
    return out;
}

struct SummaryRow {
    std::string scheme;
    PeakSummary summary;
};

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "scheme,kind,mean_daily_reduction_kw,max_reduction_kw,ratio_pct\n";
    for (const SummaryRow& r : rows)
        out << r.scheme << ',' << to_string(r.summary.kind) << ','
            << format_double(r.summary.mean_daily_reduction_kw) << ','
            << format_double(r.summary.max_reduction_kw) << ','
            << format_double(r.summary.ratio * 100.0) << '\n';
}

}  // namespace dlcflex

#endif
