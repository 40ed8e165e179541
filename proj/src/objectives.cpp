#include "mgc/objectives.hpp"

#include <cmath>
#include <sstream>

#include "mgc/errors.hpp"
#include "mgc/nn.hpp"

namespace mgc::objectives {

using namespace ag;

GanFlavor flavor_from_string(const std::string& s) {
    if (s == "hinge") return GanFlavor::hinge;
    if (s == "lsgan") return GanFlavor::lsgan;
    throw ConfigError("unknown gan flavor: " + s);
}

std::string to_string(GanFlavor f) { return f == GanFlavor::hinge ? "hinge" : "lsgan"; }

GanTerms gan_losses(const std::vector<Var>& real_scores, const Var& fake_score, GanFlavor flavor) {
    if (real_scores.empty()) throw ContractViolation("gan_losses needs at least one real score map");
    GanTerms t;
    Var real_part;
    for (const auto& s : real_scores) {
        Var term = flavor == GanFlavor::hinge ? mean(relu(axpb(s, -1.0f, 1.0f)))
                                              : mean(square(axpb(s, 1.0f, -1.0f)));
        real_part = real_part ? add(real_part, term) : term;
    }
    real_part = axpb(real_part, 1.0f / static_cast<float>(real_scores.size()), 0.0f);
    if (flavor == GanFlavor::hinge) {
        t.d_term = add(real_part, mean(relu(axpb(fake_score, 1.0f, 1.0f))));
        t.g_term = axpb(mean(fake_score), -1.0f, 0.0f);
    } else {
        t.d_term = add(real_part, mean(square(fake_score)));
        t.g_term = mean(square(axpb(fake_score, 1.0f, -1.0f)));
    }
    return t;
}

Var resource_loss(const archspec::PrunableSpec& spec, const Var& v, double p) {
    if (p <= 0.0 || p > 1.0) throw ConfigError("budget fraction p must lie in (0,1]");
    const double budget = p * spec.t_total;
    Var t = archspec::macs_of_var(spec, v);
    // Clamp below the budget with zero gradient there: relu(T - budget) + budget.
    Var clamped = axpb(relu(axpb(t, 1.0f, static_cast<float>(-budget))), 1.0f,
                       static_cast<float>(budget));
    return vlog(axpb(clamped, static_cast<float>(1.0 / budget), 0.0f));
}

double resource_loss_value(const archspec::PrunableSpec& spec, std::span<const double> v,
                           double p) {
    if (p <= 0.0 || p > 1.0) throw ConfigError("budget fraction p must lie in (0,1]");
    const double budget = p * spec.t_total;
    const double t = archspec::macs_of(spec, v) - spec.fixed_macs;
    return std::log(std::max(t, budget) / budget);
}

Var sparsity_loss(const Var& v_d) {
    if (v_d->val.numel() == 0) throw ContractViolation("sparsity_loss on empty vector");
    return mean(v_d);
}

std::string history_csv_header() {
    return "step,loss_G,loss_D,resource,sparsity,T_vG,active_vD";
}

std::string history_csv_row(const LossBundle& b) {
    std::ostringstream os;
    os.precision(9);
    os << b.step << ',' << b.loss_g << ',' << b.loss_d << ',' << b.resource << ',' << b.sparsity
       << ',' << b.t_vg << ',' << b.active_vd;
    return os.str();
}

std::vector<Var> FeatureAdaptors::params() const {
    std::vector<Var> ps;
    for (const auto& v : w) ps.push_back(v);
    for (const auto& v : b) ps.push_back(v);
    return ps;
}

FeatureAdaptors make_adaptors(const std::vector<int>& student_ch,
                              const std::vector<int>& teacher_ch) {
    if (student_ch.size() != teacher_ch.size())
        throw ContractViolation("adaptor tap count mismatch");
    FeatureAdaptors a;
    for (std::size_t i = 0; i < student_ch.size(); ++i) {
        const int cs = student_ch[i], ct = teacher_ch[i];
        Tensor w({ct, cs, 1, 1});
        for (int c = 0; c < std::min(cs, ct); ++c)
            w.at(static_cast<std::int64_t>(c) * cs + c) = 1.0f;
        a.w.push_back(ag::leaf(std::move(w), true));
        a.b.push_back(nn::param_const({ct}, 0.0f));
    }
    return a;
}

Var distillation_losses(const std::vector<Var>& student_feats,
                        const std::vector<Var>& teacher_feats, const FeatureAdaptors& adaptors,
                        float lambda_content, float lambda_texture) {
    if (student_feats.size() != teacher_feats.size() || student_feats.size() != adaptors.w.size())
        throw ContractViolation("distillation tap count mismatch");
    Var total = scalar(0.0f);
    for (std::size_t i = 0; i < student_feats.size(); ++i) {
        const auto& fs = student_feats[i];
        const auto& ft = teacher_feats[i];
        if (fs->val.dim(2) != ft->val.dim(2) || fs->val.dim(3) != ft->val.dim(3))
            throw ContractViolation("distillation spatial mismatch at tap " + std::to_string(i));
        Var mapped = conv2d(fs, adaptors.w[i], adaptors.b[i], 1, 0);
        if (lambda_content != 0.0f) {
            Var diff = sub(mapped, ft);
            total = add(total, axpb(sum(square(diff)), lambda_content, 0.0f));
        }
        if (lambda_texture != 0.0f) {
            Var gdiff = sub(gram(mapped), gram(ft));
            // Offset under the root keeps the norm smooth at zero; subtracting
            // the baseline keeps the value exactly zero for identical grams.
            Var fro = axpb(vsqrt(axpb(sum(square(gdiff)), 1.0f, 1e-12f)), 1.0f, -1e-6f);
            total = add(total, axpb(fro, lambda_texture, 0.0f));
        }
    }
    return total;
}

}  // namespace mgc::objectives
