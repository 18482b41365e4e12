#include "latlens/steering.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace latlens {

SteerResult steer(const EmbeddingSequence& seq, const SaeParams& params,
                  std::size_t k, const SteerSpec& spec) {
    check_contract(seq.dim() == params.d_in, "steer: corpus dim != model d_in");
    check_contract(spec.latent < params.d_latent, "steer: latent out of range");
    check_contract(std::isfinite(spec.magnitude), "steer: magnitude must be finite");

    std::set<std::size_t> explicit_frames;
    if (spec.frames) {
        explicit_frames.insert(spec.frames->begin(), spec.frames->end());
    }
    const auto target = static_cast<std::uint32_t>(spec.latent);

    SteerResult result;
    result.modified.file_id = seq.file_id;
    result.modified.frames = Matrix(seq.n_frames(), seq.dim());
    result.l2_delta.assign(seq.n_frames(), 0.0);

    const auto col = params.dec_column(target);
    std::vector<float> scratch;
    SparseActivation act;
    for (std::size_t t = 0; t < seq.n_frames(); ++t) {
        encode_into(params, seq.frames.row(t), k, scratch, act);
        const bool in_filter = !spec.frames || explicit_frames.count(t) != 0;

        bool touched = false;
        double diff = 0.0; // new value minus old value of the edited latent
        if (in_filter) {
            const bool present = act.active(target);
            const double old_value = act.value_of(target);
            switch (spec.mode) {
                case SteerMode::Deactivate:
                    if (present) {
                        diff = -static_cast<double>(spec.magnitude) - old_value;
                        touched = true;
                    }
                    break;
                case SteerMode::Activate:
                    if (!present) {
                        diff = spec.magnitude;
                        touched = true;
                    }
                    break;
                case SteerMode::Set:
                    diff = static_cast<double>(spec.magnitude) - old_value;
                    touched = true;
                    break;
            }
        }

        auto out = decode(params, act);
        if (touched) {
            // Decoding is affine in the latent values, so the edit is a rank-1
            // update of the plain reconstruction; applying it directly keeps
            // the delta in the span of the edited column.
            ++result.frames_touched;
            double acc = 0.0;
            for (std::size_t i = 0; i < seq.dim(); ++i) {
                const double before = out[i];
                out[i] = static_cast<float>(before + diff * col[i]);
                const double d = static_cast<double>(out[i]) - before;
                acc += d * d;
            }
            result.l2_delta[t] = std::sqrt(acc);
        }
        std::copy(out.begin(), out.end(), result.modified.frames.row(t).begin());
    }
    return result;
}

SteerResult ablate(const EmbeddingSequence& seq, const SaeParams& params,
                   std::size_t k, std::size_t latent) {
    SteerSpec spec;
    spec.latent = latent;
    spec.mode = SteerMode::Set;
    spec.magnitude = 0.0f;
    // Set-where-active: restrict to frames where the latent fires.
    std::vector<std::size_t> active_frames;
    std::vector<float> scratch;
    SparseActivation act;
    const auto target = static_cast<std::uint32_t>(latent);
    check_contract(latent < params.d_latent, "ablate: latent out of range");
    for (std::size_t t = 0; t < seq.n_frames(); ++t) {
        encode_into(params, seq.frames.row(t), k, scratch, act);
        if (act.value_of(target) > 0.0f) active_frames.push_back(t);
    }
    spec.frames = std::move(active_frames);
    return steer(seq, params, k, spec);
}

float default_magnitude(const ActivationIndex& index, std::size_t latent) {
    const auto& ps = index.postings(latent);
    check_input(!ps.empty(),
                "latent " + std::to_string(latent) +
                    " absent from index; pass an explicit magnitude");
    std::vector<float> values;
    values.reserve(ps.size());
    for (const auto& p : ps) values.push_back(p.value);
    std::sort(values.begin(), values.end());
    // Nearest-rank percentile: ceil(0.95 n), 1-based.
    const auto rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(values.size())));
    return 10.0f * values[rank - 1];
}

} // namespace latlens
