#include "otlq/signal.hpp"

#include <algorithm>
#include <cmath>

#include "otlq/linalg.hpp"

namespace otlq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// sup_{s >= 0} s^k e^{-beta s} for beta > 0.
double poly_exp_sup(int k, double beta) {
    if (k == 0) return 1.0;
    return std::pow(k / (M_E * beta), k);
}
}  // namespace

VectorXd eval_atom(const Atom& atom, double s) {
    double v = std::exp(atom.a * s);
    for (int i = 0; i < atom.k; ++i) v *= s;
    if (atom.omega != 0.0 || atom.phi != 0.0) v *= std::cos(atom.omega * s + atom.phi);
    return atom.c * v;
}

AtomFlow atom_to_flow(const Atom& atom) {
    AtomFlow fl;
    const int k = atom.k;
    const double kfact = factorial(k);
    if (atom.omega == 0.0 && atom.phi == 0.0) {
        MatrixXd G = MatrixXd::Zero(k + 1, k + 1);
        for (int i = 0; i <= k; ++i) {
            G(i, i) = atom.a;
            if (i + 1 <= k) G(i, i + 1) = 1.0;
        }
        fl.G = G;
        fl.v = VectorXd::Unit(k + 1, k);
        fl.C = kfact * atom.c * Eigen::RowVectorXd::Unit(k + 1, 0);
    } else {
        // Real embedding of the complex Jordan flow with eigenvalue a + i omega.
        const int g = 2 * (k + 1);
        MatrixXd G = MatrixXd::Zero(g, g);
        for (int i = 0; i <= k; ++i) {
            G(2 * i, 2 * i) = atom.a;
            G(2 * i, 2 * i + 1) = -atom.omega;
            G(2 * i + 1, 2 * i) = atom.omega;
            G(2 * i + 1, 2 * i + 1) = atom.a;
            if (i + 1 <= k) {
                G(2 * i, 2 * (i + 1)) = 1.0;
                G(2 * i + 1, 2 * (i + 1) + 1) = 1.0;
            }
        }
        fl.G = G;
        VectorXd v = VectorXd::Zero(g);
        v(2 * k) = std::cos(atom.phi);
        v(2 * k + 1) = std::sin(atom.phi);
        fl.v = v;
        fl.C = kfact * atom.c * Eigen::RowVectorXd::Unit(g, 0);
    }
    return fl;
}

Signal Signal::zero(int dim) { return Signal(dim, Zero{}); }

Signal Signal::constant(const VectorXd& c) {
    Atom a;
    a.c = c;
    return closed_form(static_cast<int>(c.size()), {a});
}

Signal Signal::closed_form(int dim, std::vector<Atom> atoms) {
    for (auto& a : atoms) {
        if (a.c.size() != dim) throw DimensionError("Signal::closed_form: atom dimension mismatch");
        if (a.k < 0) throw Error("Signal::closed_form: polynomial degree must be >= 0");
    }
    bool all_zero = true;
    for (const auto& a : atoms)
        if (a.c.norm() > 0.0) all_zero = false;
    if (atoms.empty() || all_zero) return zero(dim);
    return Signal(dim, ClosedForm{std::move(atoms)});
}

Signal Signal::sampled(const VectorXd& grid, const MatrixXd& values) {
    if (grid.size() < 2) throw Error("Signal::sampled: need at least two grid points");
    if (values.rows() != grid.size()) throw DimensionError("Signal::sampled: rows must match grid");
    for (int i = 1; i < grid.size(); ++i)
        if (!(grid(i) > grid(i - 1))) throw Error("Signal::sampled: grid must be strictly increasing");
    if (!values.allFinite()) throw Error("Signal::sampled: values must be finite");
    return Signal(static_cast<int>(values.cols()), Sampled{grid, values});
}

Signal Signal::flow(const MatrixXd& C, const MatrixXd& G, const VectorXd& v, double s0) {
    if (G.rows() != G.cols() || C.cols() != G.rows() || v.size() != G.rows())
        throw DimensionError("Signal::flow: inconsistent dimensions");
    return Signal(static_cast<int>(C.rows()), Flow{C, G, v, s0});
}

Signal Signal::piecewise(std::vector<double> breaks, std::vector<Signal> pieces) {
    if (breaks.size() != pieces.size() || breaks.empty())
        throw Error("Signal::piecewise: one piece per break required");
    for (size_t i = 1; i < breaks.size(); ++i)
        if (!(breaks[i] > breaks[i - 1])) throw Error("Signal::piecewise: breaks must increase");
    const int d = pieces.front().dim();
    for (const auto& p : pieces)
        if (p.dim() != d) throw DimensionError("Signal::piecewise: piece dimension mismatch");
    return Signal(d, Piecewise{std::move(breaks), std::move(pieces)});
}

Signal Signal::sum(std::vector<Signal> terms) {
    if (terms.empty()) throw Error("Signal::sum: empty");
    const int d = terms.front().dim();
    std::vector<Signal> kept;
    for (auto& t : terms) {
        if (t.dim() != d) throw DimensionError("Signal::sum: dimension mismatch");
        if (!t.is_zero()) kept.push_back(std::move(t));
    }
    if (kept.empty()) return zero(d);
    if (kept.size() == 1) return kept.front();
    return Signal(d, Sum{std::move(kept)});
}

Signal Signal::quadratic(const MatrixXd& W, Signal x, Signal lin) {
    if (W.rows() != x.dim() || W.cols() != x.dim() || lin.dim() != x.dim())
        throw DimensionError("Signal::quadratic: dimension mismatch");
    return Signal(1, Quadratic{W, std::make_shared<Signal>(std::move(x)),
                               std::make_shared<Signal>(std::move(lin))});
}

Signal Signal::callback(int dim, std::function<VectorXd(double)> f, GrowthEnvelope env,
                        double domain_lo, double domain_hi) {
    return Signal(dim, Callback{std::move(f), env, domain_lo, domain_hi});
}

bool Signal::is_zero() const {
    if (!node_) return true;
    if (std::holds_alternative<Zero>(*node_)) return true;
    if (const auto* s = std::get_if<Sum>(node_.get())) {
        for (const auto& t : s->terms)
            if (!t.is_zero()) return false;
        return true;
    }
    if (const auto* p = std::get_if<Piecewise>(node_.get())) {
        for (const auto& q : p->pieces)
            if (!q.is_zero()) return false;
        return true;
    }
    return false;
}

VectorXd Signal::operator()(double s) const {
    if (!node_) return VectorXd::Zero(dim_);
    struct Visitor {
        double s;
        int dim;
        VectorXd operator()(const Zero&) const { return VectorXd::Zero(dim); }
        VectorXd operator()(const ClosedForm& cf) const {
            VectorXd v = VectorXd::Zero(dim);
            for (const auto& a : cf.atoms) v += eval_atom(a, s);
            return v;
        }
        VectorXd operator()(const Sampled& sm) const {
            const double lo = sm.grid(0), hi = sm.grid(sm.grid.size() - 1);
            const double slack = 1e-12 * (1.0 + hi - lo);
            double sc = s;
            if (sc < lo - slack || sc > hi + slack)
                throw OutOfRangeError("Signal: evaluation outside sampled grid");
            sc = std::min(std::max(sc, lo), hi);
            // binary search for the cell
            int a = 0, b = static_cast<int>(sm.grid.size()) - 1;
            while (b - a > 1) {
                const int mid = (a + b) / 2;
                if (sm.grid(mid) <= sc)
                    a = mid;
                else
                    b = mid;
            }
            const double h = sm.grid(b) - sm.grid(a);
            const double w = (sc - sm.grid(a)) / h;
            return ((1.0 - w) * sm.values.row(a) + w * sm.values.row(b)).transpose();
        }
        VectorXd operator()(const Flow& fl) const {
            return fl.C * (matrix_exp(fl.G, s - fl.s0) * fl.v);
        }
        VectorXd operator()(const Piecewise& pw) const {
            if (s < pw.breaks.front() - 1e-12)
                throw OutOfRangeError("Signal: evaluation before first piecewise segment");
            size_t i = std::upper_bound(pw.breaks.begin(), pw.breaks.end(), s) - pw.breaks.begin();
            if (i > 0) --i;
            return pw.pieces[i](s);
        }
        VectorXd operator()(const Sum& sm) const {
            VectorXd v = VectorXd::Zero(dim);
            for (const auto& t : sm.terms) v += t(s);
            return v;
        }
        VectorXd operator()(const Quadratic& q) const {
            const VectorXd x = (*q.x)(s);
            const VectorXd l = (*q.lin)(s);
            VectorXd out(1);
            out(0) = x.dot(q.W * x) + 2.0 * l.dot(x);
            return out;
        }
        VectorXd operator()(const Callback& cb) const {
            if (s < cb.lo - 1e-12 || s > cb.hi + 1e-12)
                throw OutOfRangeError("Signal: evaluation outside callback domain");
            return cb.f(s);
        }
    };
    return std::visit(Visitor{s, dim_}, *node_);
}

GrowthEnvelope Signal::envelope() const {
    if (!node_) return {0.0, 0, 0.0};
    struct Visitor {
        const Signal* self;
        GrowthEnvelope operator()(const Zero&) const { return {0.0, 0, 0.0}; }
        GrowthEnvelope operator()(const ClosedForm& cf) const {
            double alpha = -kInf;
            int k = 0;
            for (const auto& a : cf.atoms) {
                if (a.c.norm() == 0.0) continue;
                alpha = std::max(alpha, a.a);
                k = std::max(k, a.k);
            }
            if (alpha == -kInf) return {0.0, 0, 0.0};
            double C = 0.0;
            for (const auto& a : cf.atoms) {
                if (a.c.norm() == 0.0) continue;
                // |c| s^{k_a} e^{a s} <= const (1+s)^k e^{alpha s}
                double factor;
                if (a.a >= alpha - 1e-14)
                    factor = 1.0;  // s^{k_a} <= (1+s)^k since k_a <= k
                else
                    factor = poly_exp_sup(a.k, alpha - a.a);
                C += a.c.norm() * factor;
            }
            return {C, k, alpha};
        }
        GrowthEnvelope operator()(const Sampled& sm) const {
            double C = 0.0;
            for (int i = 0; i < sm.values.rows(); ++i) C = std::max(C, sm.values.row(i).norm());
            return {C, 0, 0.0};
        }
        GrowthEnvelope operator()(const Flow& fl) const {
            const double beta = spectral_abscissa(fl.G);
            const int g = static_cast<int>(fl.G.rows());
            if (is_normal_matrix(fl.G)) {
                const double C0 = fl.C.operatorNorm() * fl.v.norm();
                return {C0 * std::exp(-beta * fl.s0), 0, beta};
            }
            const int k = g - 1;
            const double R = 60.0 / std::max(1e-3, std::abs(beta)) + 10.0;
            double C0 = 0.0;
            for (int i = 0; i <= 96; ++i) {
                const double r = R * i / 96.0;
                const double val = (fl.C * (matrix_exp(fl.G, r) * fl.v)).norm();
                C0 = std::max(C0, val * std::exp(-beta * r) / std::pow(1.0 + r, k));
            }
            return {1.25 * C0 * std::exp(-beta * fl.s0), k, beta};
        }
        GrowthEnvelope operator()(const Piecewise& pw) const {
            // Tail piece dictates the asymptotics; bounded segments fold into C.
            GrowthEnvelope tail = pw.pieces.back().envelope();
            double alpha = tail.alpha;
            int k = tail.k;
            double C = tail.C;
            for (size_t i = 0; i + 1 < pw.pieces.size(); ++i) {
                const double a = pw.breaks[i], b = pw.breaks[i + 1];
                double Mi = 0.0;
                for (int j = 0; j <= 32; ++j) {
                    const double s = a + (b - a) * j / 32.0;
                    Mi = std::max(Mi, pw.pieces[i](std::min(s, b - 1e-12 * (1 + std::abs(b)))).norm());
                }
                Mi *= 1.25;
                // Need C (1+s)^k e^{alpha s} >= Mi on [a, b].
                double denom = kInf;
                for (double s : {a, b}) denom = std::min(denom, std::pow(1.0 + std::max(s, 0.0), k) * std::exp(alpha * s));
                if (denom > 0.0 && std::isfinite(denom)) C = std::max(C, Mi / denom);
            }
            return {C, k, alpha};
        }
        GrowthEnvelope operator()(const Sum& sm) const {
            double alpha = -kInf, C = 0.0;
            int k = 0;
            for (const auto& t : sm.terms) {
                const auto e = t.envelope();
                if (e.C == 0.0) continue;
                alpha = std::max(alpha, e.alpha);
                k = std::max(k, e.k);
            }
            if (alpha == -kInf) return {0.0, 0, 0.0};
            for (const auto& t : sm.terms) {
                const auto e = t.envelope();
                if (e.C == 0.0) continue;
                C += e.C * (e.alpha >= alpha - 1e-14 ? 1.0 : poly_exp_sup(e.k, alpha - e.alpha));
            }
            return {C, k, alpha};
        }
        GrowthEnvelope operator()(const Quadratic& q) const {
            const auto ex = q.x->envelope();
            const auto el = q.lin->envelope();
            const double Wn = q.W.size() == 0 ? 0.0 : q.W.operatorNorm();
            GrowthEnvelope e;
            e.alpha = std::max(2.0 * ex.alpha, el.alpha + ex.alpha);
            e.k = std::max(2 * ex.k, el.k + ex.k);
            e.C = Wn * ex.C * ex.C + 2.0 * el.C * ex.C;
            return e;
        }
        GrowthEnvelope operator()(const Callback& cb) const { return cb.env; }
    };
    return std::visit(Visitor{this}, *node_);
}

std::pair<double, double> Signal::domain() const {
    if (!node_) return {-kInf, kInf};
    struct Visitor {
        std::pair<double, double> operator()(const Zero&) const { return {-kInf, kInf}; }
        std::pair<double, double> operator()(const ClosedForm&) const { return {-kInf, kInf}; }
        std::pair<double, double> operator()(const Sampled& sm) const {
            return {sm.grid(0), sm.grid(sm.grid.size() - 1)};
        }
        std::pair<double, double> operator()(const Flow&) const { return {-kInf, kInf}; }
        std::pair<double, double> operator()(const Piecewise& pw) const {
            double hi = kInf;
            for (const auto& p : pw.pieces) hi = std::min(hi, p.domain().second);
            return {pw.breaks.front(), hi};
        }
        std::pair<double, double> operator()(const Sum& sm) const {
            double lo = -kInf, hi = kInf;
            for (const auto& t : sm.terms) {
                const auto d = t.domain();
                lo = std::max(lo, d.first);
                hi = std::min(hi, d.second);
            }
            return {lo, hi};
        }
        std::pair<double, double> operator()(const Quadratic& q) const {
            const auto dx = q.x->domain(), dl = q.lin->domain();
            return {std::max(dx.first, dl.first), std::min(dx.second, dl.second)};
        }
        std::pair<double, double> operator()(const Callback& cb) const { return {cb.lo, cb.hi}; }
    };
    return std::visit(Visitor{}, *node_);
}

std::vector<double> Signal::breakpoints(double lo, double hi) const {
    std::vector<double> out;
    if (!node_) return out;
    struct Visitor {
        double lo, hi;
        std::vector<double>& out;
        void take(double s) const {
            if (s > lo && s < hi) out.push_back(s);
        }
        void operator()(const Zero&) const {}
        void operator()(const ClosedForm&) const {}
        void operator()(const Sampled& sm) const {
            for (int i = 0; i < sm.grid.size(); ++i) take(sm.grid(i));
        }
        void operator()(const Flow&) const {}
        void operator()(const Piecewise& pw) const {
            for (size_t i = 0; i < pw.breaks.size(); ++i) take(pw.breaks[i]);
            for (const auto& p : pw.pieces) {
                auto bp = p.breakpoints(lo, hi);
                out.insert(out.end(), bp.begin(), bp.end());
            }
        }
        void operator()(const Sum& sm) const {
            for (const auto& t : sm.terms) {
                auto bp = t.breakpoints(lo, hi);
                out.insert(out.end(), bp.begin(), bp.end());
            }
        }
        void operator()(const Quadratic& q) const {
            for (const auto* s : {q.x.get(), q.lin.get()}) {
                auto bp = s->breakpoints(lo, hi);
                out.insert(out.end(), bp.begin(), bp.end());
            }
        }
        void operator()(const Callback&) const {}
    };
    std::visit(Visitor{lo, hi, out}, *node_);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-12; }),
              out.end());
    return out;
}

Signal Signal::mapped(const MatrixXd& T) const {
    if (T.cols() != dim_) throw DimensionError("Signal::mapped: dimension mismatch");
    const int d = static_cast<int>(T.rows());
    if (!node_ || T.norm() == 0.0) return zero(d);
    struct Visitor {
        const MatrixXd& T;
        int d;
        const Signal* self;
        Signal operator()(const Zero&) const { return Signal::zero(d); }
        Signal operator()(const ClosedForm& cf) const {
            std::vector<Atom> atoms = cf.atoms;
            for (auto& a : atoms) a.c = T * a.c;
            return Signal::closed_form(d, std::move(atoms));
        }
        Signal operator()(const Sampled& sm) const {
            return Signal::sampled(sm.grid, sm.values * T.transpose());
        }
        Signal operator()(const Flow& fl) const { return Signal::flow(T * fl.C, fl.G, fl.v, fl.s0); }
        Signal operator()(const Piecewise& pw) const {
            std::vector<Signal> pieces;
            for (const auto& p : pw.pieces) pieces.push_back(p.mapped(T));
            return Signal::piecewise(pw.breaks, std::move(pieces));
        }
        Signal operator()(const Sum& sm) const {
            std::vector<Signal> terms;
            for (const auto& t : sm.terms) terms.push_back(t.mapped(T));
            return Signal::sum(std::move(terms));
        }
        Signal operator()(const Quadratic& q) const {
            if (d != 1 || T.cols() != 1)
                throw DimensionError("Signal::mapped: quadratic signals only support scaling");
            return Signal::quadratic(T(0, 0) * q.W, *q.x, q.lin->scaled(T(0, 0)));
        }
        Signal operator()(const Callback& cb) const {
            auto f = cb.f;
            const MatrixXd Tc = T;
            GrowthEnvelope env = cb.env;
            env.C *= Tc.operatorNorm();
            return Signal::callback(
                d, [f, Tc](double s) { return VectorXd(Tc * f(s)); }, env, cb.lo, cb.hi);
        }
    };
    return std::visit(Visitor{T, d, this}, *node_);
}

Signal Signal::scaled(double factor) const {
    if (factor == 0.0) return zero(dim_);
    if (node_ && std::holds_alternative<Quadratic>(*node_)) {
        const auto& q = std::get<Quadratic>(*node_);
        return Signal::quadratic(factor * q.W, *q.x, q.lin->scaled(factor));
    }
    return mapped(factor * MatrixXd::Identity(dim_, dim_));
}

Signal Signal::plus(const Signal& other) const {
    if (dim_ != other.dim_) throw DimensionError("Signal::plus: dimension mismatch");
    if (is_zero()) return other;
    if (other.is_zero()) return *this;
    if (node_ && other.node_ && std::holds_alternative<ClosedForm>(*node_) &&
        std::holds_alternative<ClosedForm>(*other.node_)) {
        auto atoms = std::get<ClosedForm>(*node_).atoms;
        const auto& oa = std::get<ClosedForm>(*other.node_).atoms;
        atoms.insert(atoms.end(), oa.begin(), oa.end());
        return closed_form(dim_, std::move(atoms));
    }
    return sum({*this, other});
}

bool flow_representable(const Signal& f) {
    if (!f.node_) return true;
    struct Visitor {
        bool operator()(const Signal::Zero&) const { return true; }
        bool operator()(const Signal::ClosedForm&) const { return true; }
        bool operator()(const Signal::Sampled&) const { return false; }
        bool operator()(const Signal::Flow&) const { return true; }
        bool operator()(const Signal::Piecewise& pw) const {
            for (const auto& p : pw.pieces)
                if (!flow_representable(p)) return false;
            return true;
        }
        bool operator()(const Signal::Sum& sm) const {
            for (const auto& t : sm.terms)
                if (!flow_representable(t)) return false;
            return true;
        }
        bool operator()(const Signal::Quadratic&) const { return false; }
        bool operator()(const Signal::Callback&) const { return false; }
    };
    return std::visit(Visitor{}, *f.node_);
}

bool Signal::closed_form_atoms(std::vector<Atom>& out) const {
    if (!node_) return true;
    if (std::holds_alternative<Zero>(*node_)) return true;
    if (const auto* cf = std::get_if<ClosedForm>(node_.get())) {
        out.insert(out.end(), cf->atoms.begin(), cf->atoms.end());
        return true;
    }
    if (const auto* sm = std::get_if<Sum>(node_.get())) {
        for (const auto& t : sm->terms)
            if (!t.closed_form_atoms(out)) return false;
        return true;
    }
    return false;
}

bool flow_terms(const Signal& sig, std::vector<FlowTerm>& out) {
    if (!sig.node_ || sig.is_zero()) return true;
    struct Visitor {
        const Signal& sig;
        std::vector<FlowTerm>& out;
        bool operator()(const Signal::Zero&) const { return true; }
        bool operator()(const Signal::ClosedForm& cf) const {
            for (const auto& a : cf.atoms) {
                const AtomFlow fl = atom_to_flow(a);
                out.push_back({fl.C, fl.G, fl.v, 0.0});
            }
            return true;
        }
        bool operator()(const Signal::Flow& fl) const {
            out.push_back({fl.C, fl.G, fl.v, fl.s0});
            return true;
        }
        bool operator()(const Signal::Sum& sm) const {
            for (const auto& t : sm.terms)
                if (!flow_terms(t, out)) return false;
            return true;
        }
        bool operator()(const Signal::Sampled&) const { return false; }
        bool operator()(const Signal::Piecewise&) const { return false; }
        bool operator()(const Signal::Quadratic&) const { return false; }
        bool operator()(const Signal::Callback&) const { return false; }
    };
    return std::visit(Visitor{sig, out}, *sig.node_);
}

namespace {

// z' = M z + C e^{G (s - s0)} v forced flow, z(t0) = z0, via the augmented
// block matrix [[M, C], [0, G]].
Signal forced_flow(const MatrixXd& M, const MatrixXd& C, const MatrixXd& G, const VectorXd& v,
                   double s0, double t0, const VectorXd& z0) {
    const int n = static_cast<int>(M.rows());
    const int g = static_cast<int>(G.rows());
    MatrixXd Aug = MatrixXd::Zero(n + g, n + g);
    Aug.topLeftCorner(n, n) = M;
    Aug.topRightCorner(n, g) = C;
    Aug.bottomRightCorner(g, g) = G;
    VectorXd w0(n + g);
    w0.head(n) = z0;
    w0.tail(g) = matrix_exp(G, t0 - s0) * v;
    MatrixXd pick = MatrixXd::Zero(n, n + g);
    pick.leftCols(n) = MatrixXd::Identity(n, n);
    return Signal::flow(pick, Aug, w0, t0);
}

}  // namespace

Signal linear_ode_flow(const MatrixXd& M, const Signal& f, double t0, const VectorXd& z0) {
    const int n = static_cast<int>(M.rows());
    if (M.cols() != n || z0.size() != n || f.dim() != n)
        throw DimensionError("linear_ode_flow: dimension mismatch");
    if (!f.node_ || f.is_zero()) {
        if (z0.norm() == 0.0) return Signal::zero(n);
        return Signal::flow(MatrixXd::Identity(n, n), M, z0, t0);
    }

    struct Visitor {
        const MatrixXd& M;
        const Signal& f;
        double t0;
        const VectorXd& z0;
        int n;
        Signal operator()(const Signal::Zero&) const {
            return Signal::flow(MatrixXd::Identity(n, n), M, z0, t0);
        }
        Signal operator()(const Signal::ClosedForm& cf) const {
            std::vector<Signal> parts;
            bool first = true;
            for (const auto& a : cf.atoms) {
                const AtomFlow fl = atom_to_flow(a);
                parts.push_back(forced_flow(M, fl.C, fl.G, fl.v, 0.0, t0,
                                            first ? z0 : VectorXd::Zero(n)));
                first = false;
            }
            return Signal::sum(std::move(parts));
        }
        Signal operator()(const Signal::Flow& fl) const {
            return forced_flow(M, fl.C, fl.G, fl.v, fl.s0, t0, z0);
        }
        Signal operator()(const Signal::Sum& sm) const {
            std::vector<Signal> parts;
            bool first = true;
            for (const auto& t : sm.terms) {
                parts.push_back(linear_ode_flow(M, t, t0, first ? z0 : VectorXd::Zero(n)));
                first = false;
            }
            return Signal::sum(std::move(parts));
        }
        Signal operator()(const Signal::Piecewise& pw) const {
            // Stitch segment solutions, matching the state at each break.
            if (t0 < pw.breaks.front() - 1e-12)
                throw NotApplicableError("linear_ode_flow: forcing undefined at initial time");
            std::vector<double> breaks;
            std::vector<Signal> pieces;
            VectorXd z = z0;
            double start = t0;
            size_t i0 = std::upper_bound(pw.breaks.begin(), pw.breaks.end(), t0) -
                        pw.breaks.begin();
            if (i0 > 0) --i0;
            for (size_t i = i0; i < pw.pieces.size(); ++i) {
                const double seg_end =
                    (i + 1 < pw.breaks.size()) ? pw.breaks[i + 1]
                                               : std::numeric_limits<double>::infinity();
                Signal sol = linear_ode_flow(M, pw.pieces[i], start, z);
                breaks.push_back(start);
                pieces.push_back(sol);
                if (!std::isfinite(seg_end)) break;
                z = sol(seg_end);
                start = seg_end;
            }
            if (pieces.size() == 1) return pieces.front();
            return Signal::piecewise(std::move(breaks), std::move(pieces));
        }
        Signal operator()(const Signal::Sampled&) const {
            throw NotApplicableError("linear_ode_flow: sampled forcing is not flow-representable");
        }
        Signal operator()(const Signal::Quadratic&) const {
            throw NotApplicableError("linear_ode_flow: quadratic forcing is not flow-representable");
        }
        Signal operator()(const Signal::Callback&) const {
            throw NotApplicableError("linear_ode_flow: callback forcing is not flow-representable");
        }
    };
    return std::visit(Visitor{M, f, t0, z0, n}, *f.node_);
}

}  // namespace otlq
