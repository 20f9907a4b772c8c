#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secnosql/errors.hpp"

namespace secnosql {

enum class SlaMetric : uint8_t { Throughput, ReadLatency, WriteLatency };

inline const char* metric_name(SlaMetric m) {
    switch (m) {
        case SlaMetric::Throughput: return "throughput";
        case SlaMetric::ReadLatency: return "read_latency";
        case SlaMetric::WriteLatency: return "write_latency";
    }
    return "?";
}

// Bivariate basis of degree 2 in p and 3 in n, in coefficient order
// c00, c10, c01, c20, c11, c02, c21, c12, c03.
inline constexpr size_t kSlaTerms = 9;
inline constexpr std::array<const char*, kSlaTerms> kSlaTermNames = {
    "1", "p", "n", "p^2", "pn", "n^2", "p^2n", "pn^2", "n^3"};
inline constexpr std::array<const char*, kSlaTerms> kSlaCoeffNames = {
    "c00", "c10", "c01", "c20", "c11", "c02", "c21", "c12", "c03"};

inline std::array<double, kSlaTerms> design_row(double p, double n) {
    return {1.0, p, n, p * p, p * n, n * n, p * p * n, p * n * n, n * n * n};
}

struct SlaModel {
    SlaMetric metric = SlaMetric::Throughput;
    std::array<double, kSlaTerms> coefficients{};
};

struct FitSample {
    double p;
    double n;
    double value;
};

class SlaFitError : public std::runtime_error {
public:
    explicit SlaFitError(const std::string& msg) : std::runtime_error(msg) {}
};

// Least squares over the nine-term surface. Columns are scaled to unit
// max-norm (n^3 grows fast enough to wreck conditioning otherwise), then
// the scaled system is solved by Householder QR. Near-zero diagonal
// entries of R expose rank deficiency; the error names the dead columns.
inline SlaModel fit(SlaMetric metric, std::span<const FitSample> samples) {
    const size_t m = samples.size();
    if (m < kSlaTerms)
        throw SlaFitError("need at least 9 samples, got " + std::to_string(m));

    std::vector<std::array<double, kSlaTerms>> a(m);
    std::vector<double> b(m);
    for (size_t i = 0; i < m; ++i) {
        a[i] = design_row(samples[i].p, samples[i].n);
        b[i] = samples[i].value;
    }

    std::array<double, kSlaTerms> scale{};
    for (size_t j = 0; j < kSlaTerms; ++j) {
        double mx = 0.0;
        for (size_t i = 0; i < m; ++i) mx = std::max(mx, std::abs(a[i][j]));
        scale[j] = mx > 0.0 ? mx : 1.0;
        for (size_t i = 0; i < m; ++i) a[i][j] /= scale[j];
    }

    // Householder QR, applying each reflector to the remaining columns and
    // the right-hand side.
    std::array<double, kSlaTerms> rdiag{};
    for (size_t k = 0; k < kSlaTerms; ++k) {
        double norm = 0.0;
        for (size_t i = k; i < m; ++i) norm += a[i][k] * a[i][k];
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            rdiag[k] = 0.0;
            continue;
        }
        double alpha = a[k][k] > 0.0 ? -norm : norm;
        double vk = a[k][k] - alpha;
        a[k][k] = vk;
        double vnorm2 = vk * vk;
        for (size_t i = k + 1; i < m; ++i) vnorm2 += a[i][k] * a[i][k];
        if (vnorm2 > 0.0) {
            for (size_t j = k + 1; j < kSlaTerms; ++j) {
                double dot = 0.0;
                for (size_t i = k; i < m; ++i) dot += a[i][k] * a[i][j];
                double f = 2.0 * dot / vnorm2;
                for (size_t i = k; i < m; ++i) a[i][j] -= f * a[i][k];
            }
            double dot = 0.0;
            for (size_t i = k; i < m; ++i) dot += a[i][k] * b[i];
            double f = 2.0 * dot / vnorm2;
            for (size_t i = k; i < m; ++i) b[i] -= f * a[i][k];
        }
        rdiag[k] = alpha;
    }

    double max_diag = 0.0;
    for (double d : rdiag) max_diag = std::max(max_diag, std::abs(d));
    std::string deficient;
    for (size_t k = 0; k < kSlaTerms; ++k) {
        if (std::abs(rdiag[k]) <= 1e-10 * std::max(max_diag, 1.0)) {
            if (!deficient.empty()) deficient += ", ";
            deficient += kSlaTermNames[k];
        }
    }
    if (!deficient.empty())
        throw SlaFitError("design matrix is rank deficient in columns: " + deficient);

    SlaModel model;
    model.metric = metric;
    for (size_t k = kSlaTerms; k-- > 0;) {
        double sum = b[k];
        for (size_t j = k + 1; j < kSlaTerms; ++j)
            sum -= a[k][j] * model.coefficients[j];
        model.coefficients[k] = sum / rdiag[k];
    }
    for (size_t j = 0; j < kSlaTerms; ++j) model.coefficients[j] /= scale[j];
    return model;
}

inline double predict(const SlaModel& model, double p, double n) {
    auto row = design_row(p, n);
    double sum = 0.0;
    for (size_t j = 0; j < kSlaTerms; ++j) sum += row[j] * model.coefficients[j];
    return sum;
}

// One service package: up to n_max concurrent clients on p proxies with a
// guaranteed throughput floor and latency ceilings.
struct SlaOffer {
    uint32_t proxies = 0;
    uint32_t n_max = 0;
    double throughput_min = 0.0;
    double read_lat_max_us = 0.0;
    double write_lat_max_us = 0.0;
};

inline std::vector<SlaOffer> sla_table(const SlaModel& throughput, const SlaModel& read_lat,
                                       const SlaModel& write_lat, uint32_t n_max,
                                       std::span<const uint32_t> p_options) {
    std::vector<SlaOffer> offers;
    offers.reserve(p_options.size());
    for (uint32_t p : p_options) {
        SlaOffer offer;
        offer.proxies = p;
        offer.n_max = n_max;
        offer.throughput_min = predict(throughput, p, n_max);
        offer.read_lat_max_us = predict(read_lat, p, n_max);
        offer.write_lat_max_us = predict(write_lat, p, n_max);
        offers.push_back(offer);
    }
    return offers;
}

namespace sladetail {

inline std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace sladetail

inline std::string render_sla_text(std::span<const SlaOffer> offers) {
    std::ostringstream os;
    os << "option  proxies  clients  throughput            read latency      write latency\n";
    int option = 1;
    for (const auto& o : offers) {
        char line[256];
        std::snprintf(line, sizeof line, "%-6d  P=%-5u  n<=%-4u  up to %s ops/sec",
                      option++, o.proxies, o.n_max,
                      sladetail::fixed3(o.throughput_min).c_str());
        os << line << "  <=" << sladetail::fixed3(o.read_lat_max_us) << " \xC2\xB5s"
           << "  <=" << sladetail::fixed3(o.write_lat_max_us) << " \xC2\xB5s\n";
    }
    return os.str();
}

inline std::string render_sla_csv(std::span<const SlaOffer> offers) {
    std::ostringstream os;
    os << "p,n_max,throughput_ops,read_lat_us,write_lat_us\n";
    for (const auto& o : offers)
        os << o.proxies << ',' << o.n_max << ',' << sladetail::fixed3(o.throughput_min)
           << ',' << sladetail::fixed3(o.read_lat_max_us) << ','
           << sladetail::fixed3(o.write_lat_max_us) << '\n';
    return os.str();
}

inline nlohmann::json coefficients_to_json(std::span<const SlaModel> models) {
    nlohmann::json j;
    for (const auto& model : models) {
        nlohmann::json c;
        for (size_t i = 0; i < kSlaTerms; ++i)
            c[kSlaCoeffNames[i]] = model.coefficients[i];
        j[metric_name(model.metric)] = c;
    }
    return j;
}

inline SlaModel coefficients_from_json(const nlohmann::json& j, SlaMetric metric) {
    const char* name = metric_name(metric);
    if (!j.contains(name))
        throw ConfigError(std::string("coefficients JSON lacks '") + name + "'");
    SlaModel model;
    model.metric = metric;
    const auto& c = j.at(name);
    for (size_t i = 0; i < kSlaTerms; ++i) {
        if (!c.contains(kSlaCoeffNames[i]))
            throw ConfigError(std::string("coefficients JSON lacks ") + name + "." +
                              kSlaCoeffNames[i]);
        model.coefficients[i] = c.at(kSlaCoeffNames[i]).get<double>();
    }
    return model;
}

}  // namespace secnosql
