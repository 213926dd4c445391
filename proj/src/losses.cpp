#include "distforge/losses.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace distforge {

namespace {

// log-sum-exp of one row with max subtraction; sum accumulated in double
template <class S>
double row_lse(const S* row, int V, S* max_out) {
    S m = row[0];
    for (int j = 1; j < V; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (int j = 0; j < V; ++j) sum += double(std::exp(double(row[j]) - double(m)));
    if (max_out) *max_out = m;
    return double(m) + std::log(sum);
}

void check_alpha_tau(double alpha, double tau) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("config", "alpha must lie in [0, 1]");
    if (!(tau > 0.0)) fail("config", "tau must be > 0");
}

}  // namespace

template <class S>
double row_log_prob(const S* logits_row, int V, int index) {
    if (index < 0 || index >= V) fail("data", "index outside vocabulary");
    return double(logits_row[index]) - row_lse(logits_row, V, (S*)nullptr);
}

template <class S>
double row_entropy(const S* logits_row, int V) {
    S m;
    double lse = row_lse(logits_row, V, &m);
    // H = lse - sum(p * x); accumulate in double
    double px = 0.0;
    for (int j = 0; j < V; ++j) {
        double lp = double(logits_row[j]) - lse;
        px += std::exp(lp) * double(logits_row[j]);
    }
    return lse - px;
}

template <class S>
double lm_loss(const S* logits, const TokenId* targets, int64_t rows, int V) {
    KahanSum nll;
    for (int64_t r = 0; r < rows; ++r) {
        const TokenId t = targets[r];
        if (t < 0 || t >= V) fail("data", "target id outside vocabulary");
        const S* row = logits + r * V;
        nll.add(row_lse(row, V, (S*)nullptr) - double(row[t]));
    }
    return nll.value() / double(rows);
}

template <class S>
double kd_loss(const S* teacher_logits, const S* student_logits, int64_t rows, int V, double tau) {
    if (!(tau > 0.0)) fail("config", "tau must be > 0");
    KahanSum kl;
    std::vector<double> lq(V), lp(V);
    for (int64_t r = 0; r < rows; ++r) {
        const S* trow = teacher_logits + r * V;
        const S* srow = student_logits + r * V;
        double lset = 0.0, lses = 0.0;
        {
            double mt = -std::numeric_limits<double>::infinity();
            double ms = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < V; ++j) {
                mt = std::max(mt, double(trow[j]) / tau);
                ms = std::max(ms, double(srow[j]) / tau);
            }
            double st = 0.0, ss = 0.0;
            for (int j = 0; j < V; ++j) {
                lq[j] = double(trow[j]) / tau - mt;
                lp[j] = double(srow[j]) / tau - ms;
                st += std::exp(lq[j]);
                ss += std::exp(lp[j]);
            }
            lset = std::log(st);
            lses = std::log(ss);
        }
        double row_kl = 0.0;
        for (int j = 0; j < V; ++j) {
            double lqj = lq[j] - lset;
            double lpj = lp[j] - lses;
            row_kl += std::exp(lqj) * (lqj - lpj);
        }
        kl.add(row_kl);
    }
    return kl.value() / double(rows);
}

double mixed_loss_value(double lm, double kd, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("config", "alpha must lie in [0, 1]");
    return (1.0 - alpha) * lm + alpha * kd;
}

template <class S>
LossBreakdown mixed_loss_and_dlogits(const S* student_logits, const TokenId* targets, int64_t rows,
                                     int V, double alpha, double tau,
                                     const TeacherSignal<S>* teacher, S* dlogits) {
    check_alpha_tau(alpha, tau);
    const bool want_kd = alpha > 0.0;
    const bool have_teacher =
        teacher != nullptr && (teacher->logits != nullptr || teacher->probs != nullptr);
    if (want_kd && !have_teacher) fail("config", "alpha > 0 requires a teacher signal");

    const double inv_rows = 1.0 / double(rows);
    const S z = S(0);

    KahanSum lm_sum, kd_sum;
    std::vector<S> p(V);       // student probs at tau = 1
    std::vector<S> ptau(V);    // student probs at tau (only if tau != 1)
    std::vector<double> lq(V); // teacher log-probs at tau

    for (int64_t r = 0; r < rows; ++r) {
        const S* srow = student_logits + r * V;
        S* drow = dlogits + r * V;

        // student softmax at tau = 1 (needed for the lm value in all modes)
        S smax;
        double lse1 = row_lse(srow, V, &smax);
        for (int j = 0; j < V; ++j) p[j] = S(std::exp(double(srow[j]) - lse1));

        const TokenId t = targets[r];
        if (t < 0 || t >= V) fail("data", "target id outside vocabulary");
        lm_sum.add(lse1 - double(srow[t]));

        // lm gradient part: (p - onehot(t)) / rows, weighted (1 - alpha)
        if (alpha < 1.0) {
            const S w = S((1.0 - alpha) * inv_rows);
            for (int j = 0; j < V; ++j) drow[j] = w * p[j];
            drow[t] -= S((1.0 - alpha) * inv_rows);
        } else {
            for (int j = 0; j < V; ++j) drow[j] = z;
        }

        if (!want_kd) continue;

        // student probs at tau
        const S* pt;
        double lse_tau = lse1;
        if (tau == 1.0) {
            pt = p.data();
        } else {
            double m = double(srow[0]) / tau;
            for (int j = 1; j < V; ++j) m = std::max(m, double(srow[j]) / tau);
            double sum = 0.0;
            for (int j = 0; j < V; ++j) sum += std::exp(double(srow[j]) / tau - m);
            lse_tau = m + std::log(sum);
            for (int j = 0; j < V; ++j) ptau[j] = S(std::exp(double(srow[j]) / tau - lse_tau));
            pt = ptau.data();
        }

        // teacher probs q at tau, plus the row KL value
        double row_kl = 0.0;
        const S kw = S(alpha * inv_rows / tau);
        if (teacher->logits != nullptr) {
            const S* trow = teacher->logits + r * V;
            double mt = double(trow[0]) / tau;
            for (int j = 1; j < V; ++j) mt = std::max(mt, double(trow[j]) / tau);
            double st = 0.0;
            for (int j = 0; j < V; ++j) {
                lq[j] = double(trow[j]) / tau - mt;
                st += std::exp(lq[j]);
            }
            double lset = std::log(st);
            for (int j = 0; j < V; ++j) {
                double lqj = lq[j] - lset;
                double q = std::exp(lqj);
                double lpj = (double(srow[j]) / tau) - lse_tau;
                row_kl += q * (lqj - lpj);
                drow[j] += kw * (pt[j] - S(q));
            }
        } else {
            const S* qrow = teacher->probs + r * V;
            for (int j = 0; j < V; ++j) {
                double q = double(qrow[j]);
                double lpj = (double(srow[j]) / tau) - lse_tau;
                if (q > 0.0) row_kl += q * (std::log(q) - lpj);
                drow[j] += kw * (pt[j] - S(q));
            }
        }
        kd_sum.add(row_kl);
    }

    LossBreakdown out;
    out.lm = lm_sum.value() * inv_rows;
    out.kd = want_kd ? kd_sum.value() * inv_rows : 0.0;
    out.mixed = (1.0 - alpha) * out.lm + alpha * out.kd;
    return out;
}

template double lm_loss<float>(const float*, const TokenId*, int64_t, int);
template double lm_loss<double>(const double*, const TokenId*, int64_t, int);
template double kd_loss<float>(const float*, const float*, int64_t, int, double);
template double kd_loss<double>(const double*, const double*, int64_t, int, double);
template double row_entropy<float>(const float*, int);
template double row_entropy<double>(const double*, int);
template double row_log_prob<float>(const float*, int, int);
template double row_log_prob<double>(const double*, int, int);
template LossBreakdown mixed_loss_and_dlogits<float>(const float*, const TokenId*, int64_t, int,
                                                     double, double, const TeacherSignal<float>*,
                                                     float*);
template LossBreakdown mixed_loss_and_dlogits<double>(const double*, const TokenId*, int64_t, int,
                                                      double, double, const TeacherSignal<double>*,
                                                      double*);

}  // namespace distforge
