#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stmc {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// Every tunable of the tracker. Defaults follow the synthetic-dataset profile.
struct TrackerConfig {
    double lambda = 0.4;       // appearance weight in the convex combination
    double theta_feat = 0.8;   // cosine value mapped to a similarity of 0
    double theta_pos = 4.0;    // distance mapped to a similarity of 0
    std::optional<double> delta_pos;  // distance gate; unset means theta_pos
    double rho = -100.0;
    double alpha_proj = 0.85;
    double ema_gamma = 0.9;
    double beta_decay = 0.9;
    int patience = 1;
    int memory = 15;
    double iou_bias = 1.0;
    bool enable_decay = false;
    bool enable_prematch = true;
    bool enable_prune = true;
    bool lost_use_position = true;  // keep the position term for lost tracks (gate is always waived)
    double min_confidence = 0.0;

    double distance_gate() const { return delta_pos.value_or(theta_pos); }

    friend bool operator==(const TrackerConfig&, const TrackerConfig&) = default;
};

namespace detail {

template <class T>
T parse_number(const std::string& key, std::string_view text) {
    T value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw ConfigError(key, "cannot parse '" + std::string(text) + "' as a number");
    return value;
}

inline bool parse_bool(const std::string& key, std::string_view text) {
    if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "off" || text == "no") return false;
    throw ConfigError(key, "cannot parse '" + std::string(text) + "' as a boolean");
}

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    // Shortest representation that round-trips.
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct Field {
    std::string_view name;
    std::function<void(TrackerConfig&, const std::string&, std::string_view)> set;
    std::function<std::optional<std::string>(const TrackerConfig&)> get;
};

inline const std::vector<Field>& fields() {
    auto real = [](double TrackerConfig::*m) {
        return std::pair{
            std::function<void(TrackerConfig&, const std::string&, std::string_view)>(
                [m](TrackerConfig& c, const std::string& k, std::string_view v) { c.*m = parse_number<double>(k, v); }),
            std::function<std::optional<std::string>(const TrackerConfig&)>(
                [m](const TrackerConfig& c) { return std::optional(format_double(c.*m)); })};
    };
    auto integer = [](int TrackerConfig::*m) {
        return std::pair{
            std::function<void(TrackerConfig&, const std::string&, std::string_view)>(
                [m](TrackerConfig& c, const std::string& k, std::string_view v) { c.*m = parse_number<int>(k, v); }),
            std::function<std::optional<std::string>(const TrackerConfig&)>(
                [m](const TrackerConfig& c) { return std::optional(std::to_string(c.*m)); })};
    };
    auto boolean = [](bool TrackerConfig::*m) {
        return std::pair{
            std::function<void(TrackerConfig&, const std::string&, std::string_view)>(
                [m](TrackerConfig& c, const std::string& k, std::string_view v) { c.*m = parse_bool(k, v); }),
            std::function<std::optional<std::string>(const TrackerConfig&)>(
                [m](const TrackerConfig& c) { return std::optional<std::string>(c.*m ? "true" : "false"); })};
    };
    auto make = [](std::string_view name, auto accessors) {
        return Field{name, std::move(accessors.first), std::move(accessors.second)};
    };
    static const std::vector<Field> table = [&] {
        std::vector<Field> t;
        t.push_back(make("lambda", real(&TrackerConfig::lambda)));
        t.push_back(make("theta_feat", real(&TrackerConfig::theta_feat)));
        t.push_back(make("theta_pos", real(&TrackerConfig::theta_pos)));
        t.push_back(Field{
            "delta_pos",
            [](TrackerConfig& c, const std::string& k, std::string_view v) {
                if (v == "unset" || v.empty())
                    c.delta_pos.reset();
                else
                    c.delta_pos = parse_number<double>(k, v);
            },
            [](const TrackerConfig& c) -> std::optional<std::string> {
                if (!c.delta_pos) return std::nullopt;
                return format_double(*c.delta_pos);
            }});
        t.push_back(make("rho", real(&TrackerConfig::rho)));
        t.push_back(make("alpha_proj", real(&TrackerConfig::alpha_proj)));
        t.push_back(make("ema_gamma", real(&TrackerConfig::ema_gamma)));
        t.push_back(make("beta_decay", real(&TrackerConfig::beta_decay)));
        t.push_back(make("patience", integer(&TrackerConfig::patience)));
        t.push_back(make("memory", integer(&TrackerConfig::memory)));
        t.push_back(make("iou_bias", real(&TrackerConfig::iou_bias)));
        t.push_back(make("enable_decay", boolean(&TrackerConfig::enable_decay)));
        t.push_back(make("enable_prematch", boolean(&TrackerConfig::enable_prematch)));
        t.push_back(make("enable_prune", boolean(&TrackerConfig::enable_prune)));
        t.push_back(make("lost_use_position", boolean(&TrackerConfig::lost_use_position)));
        t.push_back(make("min_confidence", real(&TrackerConfig::min_confidence)));
        return t;
    }();
    return table;
}

inline const Field& field(const std::string& key) {
    for (const auto& f : fields())
        if (f.name == key) return f;
    throw ConfigError(key, "unknown key");
}

}  // namespace detail

/// Throws ConfigError naming the first field that breaks its bound.
inline void validate(const TrackerConfig& c) {
    auto require = [](bool ok, const char* key, const char* bound) {
        if (!ok) throw ConfigError(key, std::string("value out of range, expected ") + bound);
    };
    require(c.lambda >= 0.0 && c.lambda <= 1.0, "lambda", "[0,1]");
    require(c.theta_feat > -1.0 && c.theta_feat < 1.0, "theta_feat", "(-1,1)");
    require(c.theta_pos > 0.0 && std::isfinite(c.theta_pos), "theta_pos", "> 0");
    require(!c.delta_pos || (*c.delta_pos >= 0.0 && std::isfinite(*c.delta_pos)), "delta_pos", ">= 0");
    require(c.rho < -1.0, "rho", "< -1");
    require(c.alpha_proj >= 0.0 && c.alpha_proj <= 1.0, "alpha_proj", "[0,1]");
    require(c.ema_gamma >= 0.0 && c.ema_gamma <= 1.0, "ema_gamma", "[0,1]");
    require(c.beta_decay > 0.0 && c.beta_decay < 1.0, "beta_decay", "(0,1)");
    require(c.patience >= 0, "patience", ">= 0");
    require(c.memory >= 0, "memory", ">= 0");
    require(c.iou_bias >= 0.0 && std::isfinite(c.iou_bias), "iou_bias", ">= 0");
    require(c.min_confidence >= 0.0 && c.min_confidence <= 1.0, "min_confidence", "[0,1]");
}

inline void set_field(TrackerConfig& c, const std::string& key, std::string_view value) {
    detail::field(key).set(c, key, detail::trim(value));
}

/// Applies `key = value` lines; `#` starts a comment.
inline void apply_config_text(TrackerConfig& c, std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = line;
        if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = detail::trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(std::string(view), "line " + std::to_string(lineno) + " is not 'key = value'");
        set_field(c, std::string(detail::trim(view.substr(0, eq))), view.substr(eq + 1));
    }
}

/// Profiles tuned for the two benchmark styles: metric ground plane with look-alike
/// vehicles, and GPS ground plane with asynchronous cameras.
inline TrackerConfig profile(std::string_view name) {
    TrackerConfig c;
    if (name == "synthehicle") {
        c.lambda = 0.4;
        c.theta_feat = 0.8;
        c.theta_pos = 4.0;
        c.memory = 15;
        c.ema_gamma = 0.5;
        c.enable_decay = false;
        c.enable_prematch = true;
        c.enable_prune = true;
    } else if (name == "cityflow") {
        c.lambda = 0.9;
        c.theta_feat = 0.7;
        c.theta_pos = 0.001;
        c.memory = 160;
        c.enable_decay = true;
        c.enable_prematch = false;
        c.enable_prune = false;
    } else {
        throw ConfigError("profile", "unknown profile '" + std::string(name) + "'");
    }
    return c;
}

/// Serializes every field; the output parses back to an identical config.
inline std::string to_config_text(const TrackerConfig& c) {
    std::string out;
    for (const auto& f : detail::fields()) {
        if (auto v = f.get(c)) out += std::string(f.name) + " = " + *v + "\n";
    }
    return out;
}

/// Defaults (or `base`), then the file, then `key=value` overrides; the result is validated.
inline TrackerConfig load_config(const std::optional<std::string>& path,
                                 const std::vector<std::string>& overrides = {},
                                 TrackerConfig base = {}) {
    TrackerConfig c = std::move(base);
    if (path) {
        std::ifstream in(*path);
        if (!in) throw std::runtime_error("cannot open config file '" + *path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        apply_config_text(c, ss.str());
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(kv, "override must be key=value");
        set_field(c, std::string(detail::trim(std::string_view(kv).substr(0, eq))),
                  std::string_view(kv).substr(eq + 1));
    }
    validate(c);
    return c;
}

}  // namespace stmc
