#include "vlbert/pretrain.hpp"

namespace vlb {

MaskedWords mask_words(const InputSequence& seq, double p, Rng& rng, const Vocabulary& vocab,
                       MaskScheme scheme) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("mask_words: p outside [0,1]");
    MaskedWords out;
    out.seq = seq;
    const auto words = word_positions(seq);
    if (words.empty()) throw std::invalid_argument("mask_words: sequence has no word elements");
    std::vector<int> selected;
    for (int idx : words) {
        if (rng.bernoulli(p)) selected.push_back(idx);
    }
    if (selected.empty()) selected.push_back(words.front());
    for (int idx : selected) {
        auto& el = out.seq.elements[idx];
        out.positions.push_back(idx);
        out.targets.push_back(el.token_id);
        if (scheme == MaskScheme::replace_only) {
            el.token_id = vocab.mask();
        } else {
            const double r = rng.uniform();
            if (r < 0.8) {
                el.token_id = vocab.mask();
            } else if (r < 0.9) {
                el.token_id = Vocabulary::num_specials +
                              static_cast<int>(rng.integer(vocab.size() - Vocabulary::num_specials));
            }  // else keep the original token
        }
    }
    return out;
}

MaskedRois mask_rois(const InputSequence& seq, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("mask_rois: p outside [0,1]");
    if (!seq.has_image || seq.rois.empty()) {
        throw std::invalid_argument("mask_rois: sequence has no regions");
    }
    MaskedRois out;
    out.rois = seq.rois;
    std::vector<int> candidates;
    for (size_t i = 0; i < out.rois.size(); ++i) {
        // the whole-image region is exempt from masking
        if (out.rois[i].category == kFullImageCategory) continue;
        candidates.push_back(static_cast<int>(i));
    }
    if (candidates.empty()) {
        throw std::invalid_argument("mask_rois: every region is the whole-image region");
    }
    std::vector<int> selected;
    for (int i : candidates) {
        if (rng.bernoulli(p)) selected.push_back(i);
    }
    if (selected.empty()) selected.push_back(candidates.front());
    for (int i : selected) out.rois[i].masked = true;

    for (size_t e = 0; e < seq.elements.size(); ++e) {
        const auto& el = seq.elements[e];
        if (el.kind != ElementKind::visual) continue;
        if (out.rois[el.roi].masked) {
            out.positions.push_back(static_cast<int>(e));
            out.targets.push_back(out.rois[el.roi].category);
        }
    }
    return out;
}

PretrainSample make_vl_sample(const VlCorpusItem& item, const std::vector<std::string>& caption,
                              uint64_t seed, const Vocabulary& vocab, const SamplerOptions& opt) {
    Rng rng(seed);
    std::vector<RoI> rois;
    rois.push_back(full_image_roi());
    for (const auto& r : item.rois) rois.push_back(r);

    PretrainSample sample;
    sample.source = PretrainSample::Source::visual_linguistic;
    sample.input = assemble_input(InputFormat::caption_image, {vocab.encode(caption)}, rois,
                                  &item.image, vocab);
    if (opt.flags.mlm_visual) {
        MaskedWords mw = mask_words(sample.input, opt.mask_word_p, rng, vocab, opt.scheme);
        sample.input = std::move(mw.seq);
        sample.masked_word_positions = std::move(mw.positions);
        sample.masked_word_targets = std::move(mw.targets);
    }
    if (opt.flags.roi_cls) {
        MaskedRois mr = mask_rois(sample.input, opt.mask_roi_p, rng);
        sample.input.rois = mr.rois;
        sample.masked_roi_positions = std::move(mr.positions);
        sample.masked_roi_targets = std::move(mr.targets);
        sample.masked_image = mask_roi_pixels(sample.input.image, sample.input.rois);
    } else {
        sample.masked_image = sample.input.image;
    }
    return sample;
}

MiniBatch sample_minibatch(const VlCorpus& vl, const TextCorpus& text, int batch_size,
                           uint64_t seed, const Vocabulary& vocab, const SamplerOptions& opt) {
    if (batch_size <= 0) throw std::invalid_argument("sample_minibatch: batch_size must be positive");
    if (opt.ratio_vl < 0 || opt.ratio_text < 0 || opt.ratio_vl + opt.ratio_text == 0) {
        throw std::invalid_argument("sample_minibatch: bad corpus ratio");
    }
    const int parts = opt.ratio_vl + opt.ratio_text;
    if (batch_size % parts != 0) {
        throw std::invalid_argument("sample_minibatch: batch size " + std::to_string(batch_size) +
                                    " is not divisible by the mixing ratio " +
                                    std::to_string(opt.ratio_vl) + ":" + std::to_string(opt.ratio_text));
    }
    const int vl_count = batch_size / parts * opt.ratio_vl;
    const int text_count = batch_size - vl_count;
    if (vl_count > 0 && vl.items.empty()) {
        throw std::invalid_argument("sample_minibatch: empty visual-linguistic corpus");
    }
    if (text_count > 0 && text.sentences.empty()) {
        throw std::invalid_argument("sample_minibatch: empty text corpus");
    }

    Rng rng(seed);
    MiniBatch batch;
    batch.vl_count = vl_count;
    batch.text_count = text_count;
    for (int i = 0; i < vl_count; ++i) {
        const size_t pick = rng.integer(vl.items.size());
        const VlCorpusItem& item = vl.items[pick];
        std::vector<std::string> caption = item.caption;
        std::optional<int> label;
        if (opt.flags.nsp) {
            const bool matched = rng.bernoulli(0.5);
            label = matched ? 1 : 0;
            if (!matched) {
                // negative pair: caption swapped in from another sample
                size_t other = rng.integer(vl.items.size());
                if (other == pick) other = (other + 1) % vl.items.size();
                caption = vl.items[other].caption;
            }
        }
        PretrainSample s =
            make_vl_sample(item, caption, rng.integer(UINT64_C(1) << 62), vocab, opt);
        s.nsp_label = label;
        batch.samples.push_back(std::move(s));
    }
    for (int i = 0; i < text_count; ++i) {
        const auto& sentence = text.sentences[rng.integer(text.sentences.size())];
        std::vector<std::string> words = sentence;
        if (static_cast<int>(words.size()) > opt.text_max_tokens) words.resize(opt.text_max_tokens);
        PretrainSample s;
        s.source = PretrainSample::Source::text_only;
        s.input = assemble_input(InputFormat::text_only, {vocab.encode(words)}, {}, nullptr, vocab);
        if (opt.flags.text_mlm) {
            Rng mask_rng(rng.integer(UINT64_C(1) << 62));
            MaskedWords mw = mask_words(s.input, opt.mask_word_p, mask_rng, vocab, opt.scheme);
            s.input = std::move(mw.seq);
            s.masked_word_positions = std::move(mw.positions);
            s.masked_word_targets = std::move(mw.targets);
        }
        batch.samples.push_back(std::move(s));
    }
    return batch;
}

}  // namespace vlb
