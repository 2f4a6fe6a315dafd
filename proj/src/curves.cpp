#include "teleop/curves.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace teleop {

FractionCurve::FractionCurve(std::vector<std::pair<double, double>> knots)
    : knots_(std::move(knots)) {
    if (knots_.empty()) throw std::invalid_argument("FractionCurve: no knots");
    double prev = 0.0;
    for (const auto& [f, e] : knots_) {
        if (f <= prev || f > 1.0) {
            throw std::invalid_argument(
                "FractionCurve: fractions must be strictly increasing in (0, 1]");
        }
        if (e < 0.0 || e > 1.0) {
            throw std::invalid_argument("FractionCurve: errors must be in [0, 1]");
        }
        prev = f;
    }
}

double FractionCurve::at(double fraction) const {
    if (knots_.empty()) throw std::logic_error("FractionCurve: empty curve");
    if (fraction <= knots_.front().first) return knots_.front().second;
    if (fraction >= knots_.back().first) return knots_.back().second;
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (fraction <= knots_[i].first) {
            const auto& [f0, e0] = knots_[i - 1];
            const auto& [f1, e1] = knots_[i];
            const double w = (fraction - f0) / (f1 - f0);
            return e0 + w * (e1 - e0);
        }
    }
    return knots_.back().second;
}

FractionCurve FractionCurve::constant(double error) {
    return FractionCurve({{1.0, error}});
}

void FractionCurve::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("FractionCurve: cannot open " + path);
    out << "fraction,error\n";
    char row[64];
    for (const auto& [f, e] : knots_) {
        std::snprintf(row, sizeof(row), "%.17g,%.17g\n", f, e);
        out << row;
    }
}

FractionCurve FractionCurve::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("FractionCurve: cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::pair<double, double>> knots;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
            throw std::runtime_error("FractionCurve: malformed row in " + path + ": " + line);
        }
        knots.emplace_back(std::stod(a), std::stod(b));
    }
    return FractionCurve(std::move(knots));
}

}  // namespace teleop
