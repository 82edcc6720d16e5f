#pragma once

// Spatially varying harmonic trend on the square-root scale:
//
//   sqrt(Z_t(s)) = b0(s) + sum_p [ b_p1(s) cos(2 pi t / T_p) + b_p2(s) sin(2 pi t / T_p) ] + gamma(s) Y_t(s)
//
// Each location is an independent OLS problem; gamma(s) is the residual standard deviation,
// so the standardized residuals Y have unit variance on the fitting window.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/field_store.hpp"

namespace windcast::trend {

/// Hours. The first three nominally correspond to annual, semi-annual and daily cycles.
inline const std::vector<double> default_periods{4380.0, 2920.0, 1460.0, 8.0, 4.0};

struct TrendModel {
    std::vector<double> periods;
    /// n x (2P + 1): intercept, then (cos, sin) pairs in period order.
    Matrix coefficients;
    Vector gamma;
    std::vector<std::string> warnings;

    Eigen::Index harmonics() const { return static_cast<Eigen::Index>(periods.size()); }
    Eigen::Index locations() const { return coefficients.rows(); }
};

/// Design row [1, cos(2 pi t/T_1), sin(2 pi t/T_1), ...] at time t (hours).
inline Vector design_row(double t, const std::vector<double>& periods) {
    Vector row(1 + 2 * static_cast<Eigen::Index>(periods.size()));
    row(0) = 1.0;
    for (std::size_t p = 0; p < periods.size(); ++p) {
        const double w = 2.0 * std::numbers::pi * t / periods[p];
        row(1 + 2 * static_cast<Eigen::Index>(p)) = std::cos(w);
        row(2 + 2 * static_cast<Eigen::Index>(p)) = std::sin(w);
    }
    return row;
}

inline Matrix design_matrix(const SpaceTimeField& field, const std::vector<double>& periods) {
    Matrix X(field.steps(), 1 + 2 * static_cast<Eigen::Index>(periods.size()));
    for (Eigen::Index t = 0; t < field.steps(); ++t) X.row(t) = design_row(field.time(t), periods).transpose();
    return X;
}

inline void validate_periods(const std::vector<double>& periods) {
    for (std::size_t i = 0; i < periods.size(); ++i) {
        if (!(periods[i] > 0.0) || !std::isfinite(periods[i])) throw ArgumentError("trend periods must be positive");
        for (std::size_t j = 0; j < i; ++j) {
            if (periods[i] == periods[j]) throw ArgumentError("trend periods must be distinct");
        }
    }
}

inline Matrix sqrt_values(const SpaceTimeField& field) {
    Matrix root(field.steps(), field.size());
    for (Eigen::Index t = 0; t < field.steps(); ++t) {
        for (Eigen::Index i = 0; i < field.size(); ++i) {
            if (field.masked(t, i)) {
                root(t, i) = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double z = field.values()(t, i);
            if (z < 0.0) {
                throw DomainError("negative value " + text::format_double(z) + " at row " + std::to_string(t) +
                                  ", location " + std::to_string(i) + " (square-root transform needs z >= 0)");
            }
            root(t, i) = std::sqrt(z);
        }
    }
    return root;
}

/// Fitted sqrt-scale mean for every (time step, location) of `field`.
inline Matrix fitted_mean(const SpaceTimeField& field, const TrendModel& model) {
    return design_matrix(field, model.periods) * model.coefficients.transpose();
}

/// Per-location OLS (column-pivoting QR) of sqrt(Z) on the harmonic design.
inline TrendModel fit_trend(const SpaceTimeField& field, const std::vector<double>& periods = default_periods) {
    validate_periods(periods);
    const Eigen::Index P = static_cast<Eigen::Index>(periods.size());
    const Eigen::Index p = 2 * P + 1;
    if (field.steps() <= p) {
        throw ArgumentError("trend fit needs more than 2P+1 = " + std::to_string(p) + " time steps, got " +
                            std::to_string(field.steps()));
    }
    const Matrix root = sqrt_values(field);
    const Matrix X = design_matrix(field, periods);
    const Eigen::Index n = field.size();

    TrendModel model;
    model.periods = periods;
    model.coefficients.resize(n, p);
    model.gamma.resize(n);

    std::vector<Eigen::Index> full_cols;
    std::vector<Eigen::Index> masked_cols;
    for (Eigen::Index i = 0; i < n; ++i) {
        bool any = false;
        for (Eigen::Index t = 0; t < field.steps() && !any; ++t) any = field.masked(t, i);
        (any ? masked_cols : full_cols).push_back(i);
    }

    auto rank_error = [&](Eigen::Index loc, Eigen::Index rank) {
        return NumericalError("trend design is rank deficient at location " + std::to_string(loc) + " (rank " +
                              std::to_string(rank) + " < " + std::to_string(p) +
                              "); check for aliased periods or too few observations");
    };
    auto finish = [&](Eigen::Index loc, const Vector& beta, const Vector& resid) {
        model.coefficients.row(loc) = beta.transpose();
        const double mean = resid.mean();
        const double var = resid.size() > 1 ? (resid.array() - mean).square().sum() / static_cast<double>(resid.size() - 1) : 0.0;
        const double sd = std::sqrt(var);
        const double scale = std::max(1.0, std::abs(beta(0)));
        if (!(sd > 1e-12 * scale)) {
            model.gamma(loc) = 1.0;
            model.warnings.push_back("location " + std::to_string(loc) + ": zero residual variance, gamma set to 1");
        } else {
            model.gamma(loc) = sd;
        }
    };

    if (!full_cols.empty()) {
        Eigen::ColPivHouseholderQR<Matrix> qr(X);
        if (qr.rank() < p) throw rank_error(full_cols.front(), qr.rank());
        Matrix Y(field.steps(), static_cast<Eigen::Index>(full_cols.size()));
        for (std::size_t k = 0; k < full_cols.size(); ++k) Y.col(static_cast<Eigen::Index>(k)) = root.col(full_cols[k]);
        const Matrix B = qr.solve(Y);
        const Matrix R = Y - X * B;
        for (std::size_t k = 0; k < full_cols.size(); ++k) {
            finish(full_cols[k], B.col(static_cast<Eigen::Index>(k)), R.col(static_cast<Eigen::Index>(k)));
        }
    }
    for (auto loc : masked_cols) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index t = 0; t < field.steps(); ++t) {
            if (!field.masked(t, loc)) rows.push_back(t);
        }
        const auto m = static_cast<Eigen::Index>(rows.size());
        Matrix Xo(m, p);
        Vector yo(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            Xo.row(r) = X.row(rows[static_cast<std::size_t>(r)]);
            yo(r) = root(rows[static_cast<std::size_t>(r)], loc);
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(Xo);
        if (m <= p || qr.rank() < p) throw rank_error(loc, qr.rank());
        const Vector beta = qr.solve(yo);
        finish(loc, beta, yo - Xo * beta);
    }
    return model;
}

inline void check_compatible(const SpaceTimeField& field, const TrendModel& model) {
    if (field.size() != model.locations()) {
        throw ShapeError("field has " + std::to_string(field.size()) + " locations, trend model has " +
                         std::to_string(model.locations()));
    }
}

/// Y = (sqrt(Z) - mean) / gamma. Out-of-window fields may have non-unit variance.
inline SpaceTimeField detrend(const SpaceTimeField& field, const TrendModel& model) {
    check_compatible(field, model);
    Matrix Y = sqrt_values(field) - fitted_mean(field, model);
    for (Eigen::Index i = 0; i < Y.cols(); ++i) Y.col(i) /= model.gamma(i);
    return field.with_values(std::move(Y));
}

/// Z = (mean + gamma Y)^2.
inline SpaceTimeField retrend(const SpaceTimeField& residual, const TrendModel& model) {
    check_compatible(residual, model);
    Matrix root = fitted_mean(residual, model);
    for (Eigen::Index i = 0; i < root.cols(); ++i) root.col(i) += model.gamma(i) * residual.values().col(i);
    return residual.with_values(root.array().square().matrix());
}

inline void write_trend_model(const TrendModel& model, const std::filesystem::path& csv_path,
                              const std::filesystem::path& json_path) {
    auto out = text::open_output(csv_path);
    out << "beta0";
    for (Eigen::Index p = 0; p < model.harmonics(); ++p) out << ",cos" << p + 1 << ",sin" << p + 1;
    out << ",gamma\n";
    for (Eigen::Index i = 0; i < model.locations(); ++i) {
        for (Eigen::Index c = 0; c < model.coefficients.cols(); ++c) {
            out << (c ? "," : "") << text::format_double(model.coefficients(i, c));
        }
        out << ',' << text::format_double(model.gamma(i)) << '\n';
    }
    text::check_written(out, csv_path);
    nlohmann::json side{{"periods", model.periods}, {"harmonics", model.periods.size()}};
    auto js = text::open_output(json_path);
    js << side.dump(2) << '\n';
    text::check_written(js, json_path);
}

inline TrendModel read_trend_model(const std::filesystem::path& csv_path, const std::filesystem::path& json_path) {
    TrendModel model;
    try {
        const auto side = nlohmann::json::parse(text::read_all(json_path));
        model.periods = side.at("periods").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(json_path.string() + ": " + e.what());
    }
    validate_periods(model.periods);
    const auto p = 1 + 2 * static_cast<Eigen::Index>(model.periods.size());
    auto in = text::open_input(csv_path);
    std::string line;
    std::getline(in, line);
    if (static_cast<Eigen::Index>(text::split(line).size()) != p + 1) {
        throw SchemaError(csv_path.string() + ": header does not match the sidecar period count");
    }
    std::vector<std::vector<double>> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        if (static_cast<Eigen::Index>(cells.size()) != p + 1) {
            throw SchemaError(csv_path.string() + ": row " + std::to_string(row) + " has wrong width");
        }
        std::vector<double> vals;
        for (auto c : cells) {
            const auto v = text::parse_double(c);
            if (!v) throw SchemaError(csv_path.string() + ": row " + std::to_string(row) + ": malformed value");
            vals.push_back(*v);
        }
        rows.push_back(std::move(vals));
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    model.coefficients.resize(n, p);
    model.gamma.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < p; ++c) model.coefficients(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        model.gamma(i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
        if (!(model.gamma(i) > 0.0)) throw SchemaError(csv_path.string() + ": gamma must be positive");
    }
    return model;
}

}  // namespace windcast::trend
