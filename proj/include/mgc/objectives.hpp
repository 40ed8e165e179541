#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mgc/archspec.hpp"
#include "mgc/autograd.hpp"

namespace mgc::objectives {

enum class GanFlavor { hinge, lsgan };
GanFlavor flavor_from_string(const std::string& s);
std::string to_string(GanFlavor f);

struct GanTerms {
    ag::Var d_term, g_term;
};

// Multiple real score maps (the neighborhood set) are averaged.
GanTerms gan_losses(const std::vector<ag::Var>& real_scores, const ag::Var& fake_score,
                    GanFlavor flavor);

// Eq.-style resource regularizer: ln(max(T(v), p*t_total) / (p*t_total)).
// Zero on/below budget with exactly-zero gradient there.
ag::Var resource_loss(const archspec::PrunableSpec& spec, const ag::Var& v, double p);
double resource_loss_value(const archspec::PrunableSpec& spec, std::span<const double> v, double p);

// Mean of the mask entries.
ag::Var sparsity_loss(const ag::Var& v_d);

// Per-step scalar record for the run history.
struct LossBundle {
    int step = 0;
    float loss_g = 0.0f, loss_d = 0.0f;
    float resource = 0.0f, sparsity = 0.0f;
    double t_vg = 0.0;        // soft generator MACs at this step
    float active_vd = 0.0f;   // hard active fraction of v_D
    std::map<std::string, float> components;
};

std::string history_csv_header();
std::string history_csv_row(const LossBundle& b);

// Learnable 1x1 convs bridging student feature channels to teacher channels.
struct FeatureAdaptors {
    std::vector<ag::Var> w;  // [ct, cs, 1, 1] per tapped layer
    std::vector<ag::Var> b;  // [ct]

    std::vector<ag::Var> params() const;
};

// Partial-identity initialization: surviving student channel i maps to
// teacher channel i, so an unpruned student starts at zero loss.
FeatureAdaptors make_adaptors(const std::vector<int>& student_ch,
                              const std::vector<int>& teacher_ch);

// lambda_content * sum ||adapt(f_s) - f_t||^2 + lambda_texture * sum ||Gram(adapt(f_s)) - Gram(f_t)||_F
ag::Var distillation_losses(const std::vector<ag::Var>& student_feats,
                            const std::vector<ag::Var>& teacher_feats,
                            const FeatureAdaptors& adaptors, float lambda_content,
                            float lambda_texture);

}  // namespace mgc::objectives
