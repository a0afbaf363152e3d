#ifndef DLCFLEX_TIME_GRID_HPP
#define DLCFLEX_TIME_GRID_HPP

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace dlcflex {

// Calendar timestamp without timezone handling; second resolution.
struct Timestamp {
    int year = 1970;
    int month = 1;
    int day = 1;
    int sec_of_day = 0;

    bool operator==(const Timestamp&) const = default;
};

// Days since 1970-01-01 (Howard Hinnant's civil date algorithm).
inline long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

inline void civil_from_days(long z, int& y, int& m, int& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yy = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

inline Timestamp parse_timestamp(const std::string& iso) {
    Timestamp ts;
    int h = 0, mi = 0, s = 0;
    int n = std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%d", &ts.year, &ts.month, &ts.day, &h, &mi, &s);
    if (n < 3) throw std::runtime_error("bad ISO-8601 timestamp: " + iso);
    if (ts.month < 1 || ts.month > 12 || ts.day < 1 || ts.day > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
        s < 0 || s > 60)
        throw std::runtime_error("bad ISO-8601 timestamp: " + iso);
    ts.sec_of_day = h * 3600 + mi * 60 + s;
    return ts;
}

inline std::string format_timestamp(const Timestamp& ts) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", ts.year, ts.month, ts.day,
                  ts.sec_of_day / 3600, (ts.sec_of_day / 60) % 60, ts.sec_of_day % 60);
    return buf;
}

inline Timestamp add_seconds(const Timestamp& ts, long seconds) {
    long total = days_from_civil(ts.year, ts.month, ts.day) * 86400L + ts.sec_of_day + seconds;
    long days = total / 86400L;
    long rem = total % 86400L;
    if (rem < 0) {
        rem += 86400L;
        --days;
    }
    Timestamp out;
    civil_from_days(days, out.year, out.month, out.day);
    out.sec_of_day = static_cast<int>(rem);
    return out;
}

// Uniform step grid. `horizon_steps` is the optimization window length T; the
// scenario's series may span many more steps than one horizon.
struct TimeGrid {
    double dt_hours = 0.25;
    int horizon_steps = 96;
    int steps_per_day = 96;  // K = 24 / dt
    Timestamp start;

    void validate() const {
        if (!(dt_hours > 0)) throw std::runtime_error("grid.dt_hours must be positive");
        if (horizon_steps < 1) throw std::runtime_error("grid.horizon_steps must be >= 1");
        const double k = 24.0 / dt_hours;
        if (std::fabs(k - std::round(k)) > 1e-9)
            throw std::runtime_error("grid.dt_hours must divide 24 exactly");
        if (steps_per_day != static_cast<int>(std::round(k)))
            throw std::runtime_error("grid.steps_per_day inconsistent with dt_hours");
        if (std::fabs(steps_per_day * dt_hours - 24.0) > 1e-9)
            throw std::runtime_error("grid: steps_per_day * dt_hours must equal 24");
    }

    static TimeGrid make(double dt_hours, int horizon_steps, const Timestamp& start) {
        TimeGrid g;
        g.dt_hours = dt_hours;
        g.horizon_steps = horizon_steps;
        g.steps_per_day = static_cast<int>(std::round(24.0 / dt_hours));
        g.start = start;
        g.validate();
        return g;
    }

    // Step-of-day of absolute step index 0 (start may be off-midnight).
    int start_step_of_day() const {
        double steps = ts_seconds_of_day() / (dt_hours * 3600.0);
        return static_cast<int>(std::llround(steps)) % steps_per_day;
    }

    Timestamp time_at(long step) const {
        return add_seconds(start, static_cast<long>(std::llround(step * dt_hours * 3600.0)));
    }

    bool operator==(const TimeGrid&) const = default;

  private:
    double ts_seconds_of_day() const { return static_cast<double>(start.sec_of_day); }
};

}  // namespace dlcflex

#endif
