#pragma once

// Shared vocabulary: calendar days, labels, splits, errors and the missing-value marker.

#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace relapse {

inline constexpr double kSecondsPerDay = 86400.0;

/// Marker for an absent measurement. Every channel uses quiet NaN.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Input data violates a documented contract (exit code 2 at the CLI).
class DataContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Calendar day, stored as days since 1970-01-01.
struct Date {
    std::int32_t days = 0;

    auto operator<=>(const Date&) const = default;

    static Date parse(std::string_view text) {
        // YYYY-MM-DD
        if (text.size() != 10 || text[4] != '-' || text[7] != '-')
            throw DataContractError("malformed date '" + std::string(text) + "'");
        auto num = [&](std::size_t pos, std::size_t len) {
            int v = 0;
            for (std::size_t i = pos; i < pos + len; ++i) {
                const char c = text[i];
                if (c < '0' || c > '9')
                    throw DataContractError("malformed date '" + std::string(text) + "'");
                v = v * 10 + (c - '0');
            }
            return v;
        };
        using namespace std::chrono;
        const year_month_day ymd{year{num(0, 4)}, month{static_cast<unsigned>(num(5, 2))},
                                 day{static_cast<unsigned>(num(8, 2))}};
        if (!ymd.ok()) throw DataContractError("invalid date '" + std::string(text) + "'");
        return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
    }

    std::string str() const {
        using namespace std::chrono;
        const year_month_day ymd{sys_days{std::chrono::days{days}}};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        return buf;
    }

    /// UTC timestamp of local midnight for a subject at the given UTC offset.
    double local_midnight_utc(std::int64_t utc_offset_seconds) const {
        return static_cast<double>(days) * kSecondsPerDay - static_cast<double>(utc_offset_seconds);
    }
};

/// Local calendar day containing UTC timestamp `t`.
inline Date local_date(double t, std::int64_t utc_offset_seconds) {
    return Date{static_cast<std::int32_t>(
        std::floor((t + static_cast<double>(utc_offset_seconds)) / kSecondsPerDay))};
}

/// Seconds since local midnight, in [0, 86400).
inline double seconds_into_local_day(double t, std::int64_t utc_offset_seconds) {
    double s = std::fmod(t + static_cast<double>(utc_offset_seconds), kSecondsPerDay);
    if (s < 0) s += kSecondsPerDay;
    return s;
}

enum class Label { normal, relapse, unlabeled };
enum class Split { train, validation, test };

inline std::string_view to_string(Label l) {
    switch (l) {
        case Label::normal: return "normal";
        case Label::relapse: return "relapse";
        case Label::unlabeled: return "unlabeled";
    }
    return "?";
}

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

inline Label parse_label(std::string_view s) {
    if (s == "normal") return Label::normal;
    if (s == "relapse") return Label::relapse;
    if (s == "unlabeled") return Label::unlabeled;
    throw DataContractError("unknown label '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw DataContractError("unknown split '" + std::string(s) + "'");
}

/// (subject, date) identifies one scored day.
struct DayKey {
    std::string subject_id;
    Date date;

    auto operator<=>(const DayKey&) const = default;
    bool operator==(const DayKey&) const = default;
};

/// 64-bit mixing step used to derive independent child seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// The `index`-th output of the splitmix64 sequence started at `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t state = seed + index * 0x9E3779B97F4A7C15ULL;
    return splitmix64(state);
}

}  // namespace relapse
