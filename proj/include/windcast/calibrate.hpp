#pragma once

// Forecast calibration: per-lead residual panels, Gaussian marginal intervals, and the
// convex shrinkage between a model-implied spatial covariance and the empirical one.

#include <Eigen/Dense>

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"

namespace windcast::calibrate {

/// Residuals of one lead: row w is truth(origin_w + lead) - forecast.
struct LeadResiduals {
    int lead = 1;
    std::vector<Eigen::Index> origins;
    Matrix residuals;
    Vector mean;
    /// sqrt(sum (R - mean)^2 / (count - 1)); zero when fewer than two origins.
    Vector sd;

    Eigen::Index count() const { return residuals.rows(); }
    Eigen::Index locations() const { return residuals.cols(); }
};

struct ResidualPanel {
    std::vector<LeadResiduals> leads;

    const LeadResiduals& at_lead(int lead) const {
        for (const auto& l : leads) {
            if (l.lead == lead) return l;
        }
        throw ArgumentError("residual panel has no lead " + std::to_string(lead));
    }
};

inline LeadResiduals summarize(int lead, std::vector<Eigen::Index> origins, Matrix residuals) {
    LeadResiduals r;
    r.lead = lead;
    r.origins = std::move(origins);
    r.residuals = std::move(residuals);
    const auto n = r.residuals.rows();
    r.mean = n > 0 ? Vector(r.residuals.colwise().mean().transpose()) : Vector::Zero(r.residuals.cols());
    r.sd = Vector::Zero(r.residuals.cols());
    if (n > 1) {
        const Matrix centered = r.residuals.rowwise() - r.mean.transpose();
        r.sd = (centered.colwise().squaredNorm().transpose() / static_cast<double>(n - 1)).array().sqrt().matrix();
    }
    return r;
}

/// Groups forecasts by lead and subtracts them from the aligned truth rows.
inline ResidualPanel build_residual_panel(const std::vector<ForecastSet>& forecasts, const Matrix& truth) {
    ResidualPanel panel;
    for (const auto& f : forecasts) {
        f.validate();
        if (f.point.cols() != truth.cols()) {
            throw ShapeError("lead " + std::to_string(f.lead) + " forecasts have " + std::to_string(f.point.cols()) +
                             " locations, truth has " + std::to_string(truth.cols()));
        }
        for (const auto& l : panel.leads) {
            if (l.lead == f.lead) throw ArgumentError("duplicate forecast set for lead " + std::to_string(f.lead));
        }
        Matrix r(f.point.rows(), f.point.cols());
        for (Eigen::Index w = 0; w < f.point.rows(); ++w) {
            const auto target = f.origins[static_cast<std::size_t>(w)] + f.lead;
            if (target < 0 || target >= truth.rows()) {
                throw ShapeError("lead " + std::to_string(f.lead) + " origin " +
                                 std::to_string(f.origins[static_cast<std::size_t>(w)]) + " targets row " +
                                 std::to_string(target) + " outside the truth field (" + std::to_string(truth.rows()) +
                                 " rows)");
            }
            r.row(w) = truth.row(target) - f.point.row(w);
        }
        panel.leads.push_back(summarize(f.lead, f.origins, std::move(r)));
    }
    std::sort(panel.leads.begin(), panel.leads.end(), [](const auto& a, const auto& b) { return a.lead < b.lead; });
    return panel;
}

inline ResidualPanel build_residual_panel(const std::vector<ForecastSet>& forecasts, const SpaceTimeField& truth) {
    return build_residual_panel(forecasts, truth.values());
}

/// Two-sided standard normal quantile z_{(1+q)/2}.
inline double interval_z(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ArgumentError("coverage level must lie in (0, 1), got " + text::format_double(level));
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 * (1.0 + level));
}

/// Per-location half-widths z * sd.
inline Vector marginal_half_widths(const LeadResiduals& lead, double level) { return interval_z(level) * lead.sd; }

/// Attaches half-widths to every row of a forecast set.
inline void attach_intervals(ForecastSet& f, const LeadResiduals& lead, double level) {
    if (f.point.cols() != lead.locations()) throw ShapeError("forecast and residual panel disagree on location count");
    const Vector h = marginal_half_widths(lead, level);
    f.half_width = h.transpose().replicate(f.point.rows(), 1);
}

/// Fraction of origins whose residual lies within +-half_width, per location.
inline Vector empirical_coverage(const Matrix& residuals, const Vector& half_width) {
    if (residuals.cols() != half_width.size()) throw ShapeError("half-width count does not match residual columns");
    Vector cov(residuals.cols());
    for (Eigen::Index i = 0; i < residuals.cols(); ++i) {
        cov(i) = (residuals.col(i).array().abs() <= half_width(i)).cast<double>().mean();
    }
    return cov;
}

/// Calibrated residuals (R - mean) / sd; locations with sd = 0 map to 0.
inline Matrix standardized_residuals(const LeadResiduals& lead) {
    Matrix z = lead.residuals.rowwise() - lead.mean.transpose();
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
        if (lead.sd(i) > 0.0) {
            z.col(i) /= lead.sd(i);
        } else {
            z.col(i).setZero();
        }
    }
    return z;
}

/// Covariance of the calibrated residuals with 1 / (count - 1) normalization.
inline Matrix empirical_covariance(const LeadResiduals& lead) {
    if (lead.count() < 2) throw ArgumentError("empirical covariance needs at least two origins");
    const Matrix z = standardized_residuals(lead);
    return (z.transpose() * z) / static_cast<double>(lead.count() - 1);
}

struct CalibratedCovariance {
    double delta = 0.0;
    int lead = 1;
    Matrix covariance;
};

inline void check_pair(const Matrix& spde, const Matrix& emp) {
    if (spde.rows() != spde.cols() || emp.rows() != emp.cols() || spde.rows() != emp.rows()) {
        throw ShapeError("covariances must be square with matching sizes (" + std::to_string(spde.rows()) + "x" +
                         std::to_string(spde.cols()) + " vs " + std::to_string(emp.rows()) + "x" +
                         std::to_string(emp.cols()) + ")");
    }
}

/// delta * spde + (1 - delta) * emp, symmetrized.
inline CalibratedCovariance shrink_covariance(const Matrix& spde, const Matrix& emp, double delta, int lead = 1) {
    check_pair(spde, emp);
    if (!(delta >= 0.0 && delta <= 1.0)) throw ArgumentError("shrinkage weight must lie in [0, 1]");
    CalibratedCovariance c;
    c.delta = delta;
    c.lead = lead;
    if (delta == 1.0) {
        c.covariance = spde;
    } else if (delta == 0.0) {
        c.covariance = emp;
    } else {
        c.covariance = delta * spde + (1.0 - delta) * emp;
    }
    c.covariance = (0.5 * (c.covariance + c.covariance.transpose())).eval();
    return c;
}

struct SquareDiagnostic {
    double half_side = 0.0;
    std::size_t inside = 0;
    std::optional<double> delta;
    double mean_coverage = std::numeric_limits<double>::quiet_NaN();
    double marginal_median = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

struct DeltaSelection {
    double delta = 0.0;
    double half_side = 0.0;
    std::vector<SquareDiagnostic> squares;
};

struct SelectOptions {
    double level = 0.95;
    double step = 0.01;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

/// Chooses the shrinkage weight by coverage of the spatial mean over growing squares around
/// `center`. Both covariances are on the calibrated-residual scale; intervals rescale by sd.
inline DeltaSelection select_delta(const LeadResiduals& lead, const Matrix& spde, const Matrix& emp,
                                   const LocationTable& locations, const Point& center,
                                   const std::vector<double>& half_sides, const SelectOptions& opt = {}) {
    check_pair(spde, emp);
    if (spde.rows() != lead.locations() || locations.size() != static_cast<std::size_t>(lead.locations())) {
        throw ShapeError("covariance, locations and residual panel must agree on location count");
    }
    if (half_sides.empty()) throw ArgumentError("square size grid must not be empty");
    if (!(opt.step > 0.0 && opt.step <= 1.0)) throw ArgumentError("delta step must lie in (0, 1]");
    if (lead.count() < 1) throw ArgumentError("residual panel has no origins");
    const double z = interval_z(opt.level);
    const int steps = static_cast<int>(std::lround(1.0 / opt.step));

    DeltaSelection out;
    double best_gap = std::numeric_limits<double>::infinity();
    bool any = false;
    for (double half : half_sides) {
        SquareDiagnostic d;
        d.half_side = half;
        std::vector<Eigen::Index> ids;
        for (std::size_t i = 0; i < locations.size(); ++i) {
            const auto& p = locations[i];
            if (std::abs(p.x - center.x) <= half && std::abs(p.y - center.y) <= half) ids.push_back(static_cast<Eigen::Index>(i));
        }
        d.inside = ids.size();
        if (ids.empty()) {
            d.note = "no locations inside square; skipped";
            out.squares.push_back(d);
            continue;
        }
        const auto n = static_cast<double>(ids.size());
        Vector u(static_cast<Eigen::Index>(ids.size()));
        Vector spatial_mean = Vector::Zero(lead.count());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            u(static_cast<Eigen::Index>(k)) = lead.sd(ids[k]) / n;
            spatial_mean += lead.residuals.col(ids[k]) / n;
        }
        // Quadratic forms are linear in delta, so evaluate both parents once.
        double qa = 0.0, qb = 0.0;
        for (std::size_t a = 0; a < ids.size(); ++a) {
            for (std::size_t b = 0; b < ids.size(); ++b) {
                const double w = u(static_cast<Eigen::Index>(a)) * u(static_cast<Eigen::Index>(b));
                qa += w * spde(ids[a], ids[b]);
                qb += w * emp(ids[a], ids[b]);
            }
        }
        double best = std::numeric_limits<double>::infinity();
        double chosen = 0.0, chosen_cov = 0.0;
        for (int s = 0; s <= steps; ++s) {
            const double delta = std::min(1.0, s * opt.step);
            const double v = std::max(0.0, delta * qa + (1.0 - delta) * qb);
            const double hw = z * std::sqrt(v);
            const double cov = (spatial_mean.array().abs() <= hw).cast<double>().mean();
            const double gap = std::abs(cov - opt.level);
            if (gap < best - 1e-12) {
                best = gap;
                chosen = delta;
                chosen_cov = cov;
            }
        }
        d.delta = chosen;
        d.mean_coverage = chosen_cov;
        // Marginal coverage is judged over every location, not just the square.
        std::vector<double> marg;
        marg.reserve(static_cast<std::size_t>(lead.locations()));
        for (Eigen::Index i = 0; i < lead.locations(); ++i) {
            const double var = std::max(0.0, chosen * spde(i, i) + (1.0 - chosen) * emp(i, i));
            const double hw = z * lead.sd(i) * std::sqrt(var);
            marg.push_back((lead.residuals.col(i).array().abs() <= hw).cast<double>().mean());
        }
        d.marginal_median = median(std::move(marg));
        const double gap = std::abs(d.marginal_median - opt.level);
        if (gap < best_gap - 1e-12) {
            best_gap = gap;
            out.delta = chosen;
            out.half_side = half;
            any = true;
        }
        out.squares.push_back(d);
    }
    if (!any) throw ArgumentError("no square around the centre contains any location");
    return out;
}

inline void write_delta_diagnostics(const DeltaSelection& sel, const std::filesystem::path& path) {
    auto out = text::open_output(path);
    out << "half_side,inside,delta_hat,mean_coverage,marginal_median,note\n";
    for (const auto& d : sel.squares) {
        out << text::format_double(d.half_side) << ',' << d.inside << ','
            << (d.delta ? text::format_double(*d.delta) : std::string()) << ','
            << (d.delta ? text::format_double(d.mean_coverage) : std::string()) << ','
            << (d.delta ? text::format_double(d.marginal_median) : std::string()) << ',' << d.note << '\n';
    }
    text::check_written(out, path);
}

/// Centroid of a location table (default square centre).
inline Point centroid(const LocationTable& locs) {
    Point c{0.0, 0.0};
    for (const auto& p : locs.coords()) {
        c.x += p.x;
        c.y += p.y;
    }
    c.x /= static_cast<double>(locs.size());
    c.y /= static_cast<double>(locs.size());
    return c;
}

}  // namespace windcast::calibrate
