#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <memory>
#include <variant>
#include <vector>

#include "otlq/errors.hpp"

namespace otlq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One closed-form term c * s^k * e^{a s} * cos(omega s + phi), c a vector coefficient.
struct Atom {
    VectorXd c;
    int k = 0;
    double a = 0.0;
    double omega = 0.0;
    double phi = 0.0;
};

// Envelope |sig(s)| <= C (1+s)^k e^{alpha s} for s >= s_lo.
struct GrowthEnvelope {
    double C = 0.0;
    int k = 0;
    double alpha = 0.0;
};

// One term of a pure flow decomposition C e^{G (s - s0)} v.
struct FlowTerm {
    MatrixXd C, G;
    VectorXd v;
    double s0 = 0.0;
};

// A vector-valued function of time. Closed under linear maps, sums, piecewise
// concatenation and matrix-exponential flows, so synthesized controls and
// trajectories stay exactly evaluable. Immutable after construction.
class Signal {
  public:
    Signal() = default;

    static Signal zero(int dim);
    static Signal constant(const VectorXd& c);
    static Signal closed_form(int dim, std::vector<Atom> atoms);
    // Strictly increasing grid; values has one row per grid point. Linear
    // interpolation inside the grid, evaluation outside is an error.
    static Signal sampled(const VectorXd& grid, const MatrixXd& values);
    // value(s) = C e^{G (s - s0)} v
    static Signal flow(const MatrixXd& C, const MatrixXd& G, const VectorXd& v, double s0);
    // piece i is active on [breaks[i], breaks[i+1]), the last on [breaks.back(), inf).
    static Signal piecewise(std::vector<double> breaks, std::vector<Signal> pieces);
    static Signal sum(std::vector<Signal> terms);
    // Scalar signal <W x(s), x(s)> + 2 <lin(s), x(s)>.
    static Signal quadratic(const MatrixXd& W, Signal x, Signal lin);
    // Arbitrary evaluator with a declared envelope (used for polar factors).
    static Signal callback(int dim, std::function<VectorXd(double)> f, GrowthEnvelope env,
                           double domain_lo = 0.0,
                           double domain_hi = std::numeric_limits<double>::infinity());

    VectorXd operator()(double s) const;
    int dim() const { return dim_; }
    bool is_zero() const;

    // Declared growth bound; for sampled signals the envelope is the max over
    // the grid with alpha = 0 (the domain is bounded anyway).
    GrowthEnvelope envelope() const;
    double growth_rate() const { return envelope().alpha; }

    // [lo, hi]; hi = +inf for everything except sampled grids.
    std::pair<double, double> domain() const;
    bool bounded_domain() const { return std::isfinite(domain().second); }

    // Discontinuity/kink locations inside (lo, hi), for quadrature panel alignment.
    std::vector<double> breakpoints(double lo, double hi) const;

    Signal scaled(double factor) const;
    Signal mapped(const MatrixXd& T) const;  // s -> T * value(s)
    Signal plus(const Signal& other) const;

    // Atom list when the signal is a plain closed form (or zero); enables the
    // exact classification paths.
    bool closed_form_atoms(std::vector<Atom>& out) const;

  private:
    struct Zero {};
    struct ClosedForm {
        std::vector<Atom> atoms;
    };
    struct Sampled {
        VectorXd grid;
        MatrixXd values;
    };
    struct Flow {
        MatrixXd C, G;
        VectorXd v;
        double s0;
    };
    struct Piecewise {
        std::vector<double> breaks;
        std::vector<Signal> pieces;
    };
    struct Sum {
        std::vector<Signal> terms;
    };
    struct Quadratic {
        MatrixXd W;
        std::shared_ptr<Signal> x, lin;
    };
    struct Callback {
        std::function<VectorXd(double)> f;
        GrowthEnvelope env;
        double lo, hi;
    };
    using Node = std::variant<Zero, ClosedForm, Sampled, Flow, Piecewise, Sum, Quadratic, Callback>;

    int dim_ = 0;
    std::shared_ptr<const Node> node_;

    Signal(int dim, Node node) : dim_(dim), node_(std::make_shared<const Node>(std::move(node))) {}

    friend Signal linear_ode_flow(const MatrixXd&, const Signal&, double, const VectorXd&);
    friend bool flow_representable(const Signal&);
    friend bool flow_terms(const Signal&, std::vector<FlowTerm>&);
};

// value(s) of a single atom at time s.
VectorXd eval_atom(const Atom& atom, double s);

// Exact solution of z' = M z + f(s), z(t0) = z0, returned as a Signal built
// from matrix-exponential flows. Requires f in the flow-representable family
// (zero / closed-form / flow / sums / piecewise of those); throws
// NotApplicableError otherwise.
Signal linear_ode_flow(const MatrixXd& M, const Signal& f, double t0, const VectorXd& z0);

// True when linear_ode_flow can handle the signal exactly.
bool flow_representable(const Signal& f);

// Pure flow-term decomposition sig(s) = sum_i C_i e^{G_i (s - s0_i)} v_i,
// available for the zero/closed-form/flow/sum family (no piecewise pieces).
bool flow_terms(const Signal& sig, std::vector<FlowTerm>& out);

// Exact flow representation of one atom: value(s) = C e^{G s} v.
// Used by the closed-form convolution/tail machinery.
struct AtomFlow {
    MatrixXd C, G;
    VectorXd v;
};
AtomFlow atom_to_flow(const Atom& atom);

}  // namespace otlq
