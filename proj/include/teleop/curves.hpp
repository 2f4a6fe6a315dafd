#pragma once

#include <string>
#include <utility>
#include <vector>

namespace teleop {

// Piecewise-linear map from observation fraction to an error probability.
// Knot fractions are strictly increasing within (0, 1]; evaluation clamps to
// the first/last knot outside the covered range.
class FractionCurve {
public:
    FractionCurve() = default;
    explicit FractionCurve(std::vector<std::pair<double, double>> knots);

    double at(double fraction) const;
    const std::vector<std::pair<double, double>>& knots() const { return knots_; }
    bool empty() const { return knots_.empty(); }

    static FractionCurve constant(double error);

    void save_csv(const std::string& path) const;
    static FractionCurve load_csv(const std::string& path);

private:
    std::vector<std::pair<double, double>> knots_;
};

// Error-rate curves of the two predictors, indexed by how much of the task
// had been observed when the prediction was made.
using AccuracyCurve = FractionCurve;   // task classification error
using TrajErrorCurve = FractionCurve;  // trajectory prediction failure

}  // namespace teleop
