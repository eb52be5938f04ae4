#include "satseg/cli.hpp"

#include <atomic>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "satseg/baseline.hpp"
#include "satseg/checkpoint.hpp"
#include "satseg/corpus.hpp"
#include "satseg/corrupt.hpp"
#include "satseg/eval.hpp"
#include "satseg/infer.hpp"
#include "satseg/model.hpp"
#include "satseg/tokenize.hpp"
#include "satseg/train.hpp"
#include "satseg/unicode.hpp"

namespace satseg::cli {

namespace {

// JSON config file mirrors the long flag names (without dashes); explicitly
// passed flags win.
struct ConfigOverlay {
    nlohmann::json j = nlohmann::json::object();
    std::vector<std::function<void()>> appliers;

    void load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw DataError("cannot open config file: " + path);
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("config parse error: ") + e.what());
        }
    }

    template <typename T>
    void track(CLI::Option* opt, const std::string& key, T& var) {
        appliers.push_back([this, opt, key, &var]() {
            if (opt->count() == 0 && j.contains(key)) var = j.at(key).get<T>();
        });
    }

    void apply() {
        for (auto& f : appliers) f();
    }
};

corpus::CorpusFormat parse_format(const std::string& s) {
    if (s == "lines") return corpus::CorpusFormat::Lines;
    if (s == "jsonl") return corpus::CorpusFormat::Jsonl;
    throw CLI::ValidationError("--format", "expected 'lines' or 'jsonl'");
}

std::vector<std::string> language_corpora(const std::vector<corpus::Document>& docs) {
    std::map<std::string, std::string> by_lang;
    for (const auto& d : docs) {
        auto& s = by_lang[d.language];
        for (const auto& u : d.units) {
            if (!s.empty()) s += ' ';
            s += u.text;
        }
    }
    std::vector<std::string> out;
    for (auto& [lang, text] : by_lang) out.push_back(std::move(text));
    return out;
}

struct SegmentRecord {
    std::string text;
    std::optional<std::set<size_t>> boundaries;
};

std::vector<SegmentRecord> read_records(std::istream& in, const std::string& format) {
    std::vector<SegmentRecord> recs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (format == "lines") {
            recs.push_back({line, std::nullopt});
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("input line " + std::to_string(line_no) + ": " + e.what());
        }
        SegmentRecord r;
        r.text = j.at("text").get<std::string>();
        if (j.contains("boundaries")) {
            std::set<size_t> b;
            for (const auto& x : j["boundaries"]) b.insert(x.get<size_t>());
            r.boundaries = std::move(b);
        }
        recs.push_back(std::move(r));
    }
    return recs;
}

void write_segmentation(std::ostream& out, const std::string& text, const infer::SegmentationResult& res,
                        bool with_probs) {
    nlohmann::ordered_json j;
    j["text"] = text;
    j["boundaries"] = std::vector<size_t>(res.boundaries.begin(), res.boundaries.end());
    j["sentences"] = res.sentences;
    if (with_probs) j["probs"] = res.char_probs;
    out << j.dump() << "\n";
}

model::ModelParams prepare_model(checkpoint::Checkpoint& ck, size_t layers, int lookahead_override) {
    model::ModelParams params = std::move(ck.params);
    if (params.has_adapters()) params = model::merge_lora(params);
    if (layers > 0 && layers < params.config.n_layers) params = model::truncate_layers(params, layers);
    if (lookahead_override >= -1 && lookahead_override != -2) {
        params.config.lookahead_total = lookahead_override;
        params.config.lookahead_per_layer =
            lookahead_override < 0 ? model::kUnlimitedLookahead
                                   : lookahead_override / static_cast<int>(params.config.n_layers);
    }
    return params;
}

int run_impl(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"satseg: sentence segmentation toolkit"};
    app.require_subcommand(1);
    ConfigOverlay overlay;
    std::string config_path;

    // ----- tokenizer-train -----
    auto* tcmd = app.add_subcommand("tokenizer-train", "Train a tokenizer from a corpus");
    struct {
        std::string input, format = "lines", mode = "char", output = "tokenizer.json";
        size_t vocab_size = 512;
    } targs;
    {
        auto* o1 = tcmd->add_option("--input", targs.input, "corpus file");
        auto* o2 = tcmd->add_option("--format", targs.format, "lines|jsonl");
        auto* o3 = tcmd->add_option("--mode", targs.mode, "char|bpe");
        auto* o4 = tcmd->add_option("--vocab-size", targs.vocab_size, "bpe vocabulary budget");
        auto* o5 = tcmd->add_option("--output", targs.output, "tokenizer json path");
        tcmd->add_option("--config", config_path, "json config file");
        overlay.track(o1, "input", targs.input);
        overlay.track(o2, "format", targs.format);
        overlay.track(o3, "mode", targs.mode);
        overlay.track(o4, "vocab-size", targs.vocab_size);
        overlay.track(o5, "output", targs.output);
    }

    // ----- shared training options helper -----
    struct TrainArgs {
        std::string input, format = "jsonl", tokenizer, ckpt_in, output = "model.ckpt", log;
        size_t dim = 64, layers = 2, heads = 4, ffn = 256, max_context = 512, train_context = 256;
        int lookahead = 48;
        size_t steps = 500, batch_size = 8, warmup = 50, top_k_punct = 30;
        double lr = 1e-4, aux_weight = 1.0, weight_decay = 0.01;
        double p_remove = 0.25, p_full_strip = 0.10, p_lower = 0.5, p_ugc_remove_all = 0.5, p_dup = 0.5,
               dup_base = 0.5, p_space_remove = 0.1, p_space_add = 0.1, geo_p = 0.5;
        uint64_t seed = 0;
        bool clean_only = false;
    };

    auto add_train_common = [&](CLI::App* cmd, TrainArgs& a) {
        overlay.track(cmd->add_option("--input", a.input, "training corpus"), "input", a.input);
        overlay.track(cmd->add_option("--format", a.format, "lines|jsonl"), "format", a.format);
        overlay.track(cmd->add_option("--output", a.output, "checkpoint output path"), "output", a.output);
        overlay.track(cmd->add_option("--steps", a.steps, "optimizer steps"), "steps", a.steps);
        overlay.track(cmd->add_option("--batch-size", a.batch_size, "chunks per step"), "batch-size", a.batch_size);
        overlay.track(cmd->add_option("--lr", a.lr, "peak learning rate"), "lr", a.lr);
        overlay.track(cmd->add_option("--warmup", a.warmup, "warmup steps"), "warmup", a.warmup);
        overlay.track(cmd->add_option("--aux-weight", a.aux_weight, "auxiliary loss weight"), "aux-weight",
                      a.aux_weight);
        overlay.track(cmd->add_option("--weight-decay", a.weight_decay, "AdamW weight decay"), "weight-decay",
                      a.weight_decay);
        overlay.track(cmd->add_option("--seed", a.seed, "rng seed"), "seed", a.seed);
        overlay.track(cmd->add_option("--log", a.log, "jsonl training log path"), "log", a.log);
        overlay.track(cmd->add_option("--train-context", a.train_context, "training context tokens"),
                      "train-context", a.train_context);
        cmd->add_option("--config", config_path, "json config file");
    };

    auto* pcmd = app.add_subcommand("pretrain", "Self-supervised pretraining from scratch");
    TrainArgs pargs;
    add_train_common(pcmd, pargs);
    {
        overlay.track(pcmd->add_option("--tokenizer", pargs.tokenizer, "tokenizer json"), "tokenizer",
                      pargs.tokenizer);
        overlay.track(pcmd->add_option("--dim", pargs.dim, "model width"), "dim", pargs.dim);
        overlay.track(pcmd->add_option("--layers", pargs.layers, "transformer layers"), "layers", pargs.layers);
        overlay.track(pcmd->add_option("--heads", pargs.heads, "attention heads"), "heads", pargs.heads);
        overlay.track(pcmd->add_option("--ffn", pargs.ffn, "feed-forward width"), "ffn", pargs.ffn);
        overlay.track(pcmd->add_option("--max-context", pargs.max_context, "maximum context tokens"), "max-context",
                      pargs.max_context);
        overlay.track(pcmd->add_option("--lookahead", pargs.lookahead, "total lookahead tokens; -1 unlimited"),
                      "lookahead", pargs.lookahead);
        overlay.track(pcmd->add_option("--p-remove", pargs.p_remove, "punctuation removal probability"), "p-remove",
                      pargs.p_remove);
        overlay.track(pcmd->add_option("--p-full-strip", pargs.p_full_strip, "full strip sample probability"),
                      "p-full-strip", pargs.p_full_strip);
        overlay.track(pcmd->add_option("--top-k-punct", pargs.top_k_punct, "punctuation chars per language"),
                      "top-k-punct", pargs.top_k_punct);
        pcmd->add_flag("--clean-only", pargs.clean_only, "disable corruptions (ablation)");
    }

    auto* scmd = app.add_subcommand("train-sm", "Supervised mixture stage on sentence data");
    TrainArgs sargs;
    sargs.lr = 3e-5;
    sargs.warmup = 500;
    add_train_common(scmd, sargs);
    {
        overlay.track(scmd->add_option("--checkpoint", sargs.ckpt_in, "input checkpoint"), "checkpoint",
                      sargs.ckpt_in);
        overlay.track(scmd->add_option("--p-lower", sargs.p_lower, "ugc lowercase probability"), "p-lower",
                      sargs.p_lower);
        overlay.track(scmd->add_option("--p-ugc-remove-all", sargs.p_ugc_remove_all, "ugc strip probability"),
                      "p-ugc-remove-all", sargs.p_ugc_remove_all);
        overlay.track(scmd->add_option("--p-dup", sargs.p_dup, "ugc duplication trigger probability"), "p-dup",
                      sargs.p_dup);
        overlay.track(scmd->add_option("--dup-base", sargs.dup_base, "duplication geometric base"), "dup-base",
                      sargs.dup_base);
        overlay.track(scmd->add_option("--p-space-remove", sargs.p_space_remove, "ugc separator removal"),
                      "p-space-remove", sargs.p_space_remove);
        overlay.track(scmd->add_option("--p-space-add", sargs.p_space_add, "ugc extra space probability"),
                      "p-space-add", sargs.p_space_add);
        overlay.track(scmd->add_option("--geo-p", sargs.geo_p, "geometric packing parameter"), "geo-p", sargs.geo_p);
        scmd->add_flag("--clean-only", sargs.clean_only, "disable corruptions (ablation)");
    }

    auto* lcmd = app.add_subcommand("adapt-lora", "LoRA domain adaptation on target sentences");
    struct {
        std::string sentences, format = "jsonl", ckpt_in, output = "adapted.ckpt", log;
        size_t rank = 16, epochs = 30, batch_size = 8, train_context = 256;
        double scale = 32.0, lr = 3e-4, weight_decay = 0.01;
        uint64_t seed = 0;
        bool merge = false;
    } largs;
    {
        overlay.track(lcmd->add_option("--sentences", largs.sentences, "target-domain sentence corpus"),
                      "sentences", largs.sentences);
        overlay.track(lcmd->add_option("--format", largs.format, "lines|jsonl"), "format", largs.format);
        overlay.track(lcmd->add_option("--checkpoint", largs.ckpt_in, "input checkpoint"), "checkpoint",
                      largs.ckpt_in);
        overlay.track(lcmd->add_option("--output", largs.output, "checkpoint output path"), "output", largs.output);
        overlay.track(lcmd->add_option("--rank", largs.rank, "LoRA rank"), "rank", largs.rank);
        overlay.track(lcmd->add_option("--scale", largs.scale, "LoRA scaling factor"), "scale", largs.scale);
        overlay.track(lcmd->add_option("--epochs", largs.epochs, "adaptation epochs"), "epochs", largs.epochs);
        overlay.track(lcmd->add_option("--lr", largs.lr, "peak learning rate"), "lr", largs.lr);
        overlay.track(lcmd->add_option("--batch-size", largs.batch_size, "chunks per step"), "batch-size",
                      largs.batch_size);
        overlay.track(lcmd->add_option("--train-context", largs.train_context, "training context tokens"),
                      "train-context", largs.train_context);
        overlay.track(lcmd->add_option("--seed", largs.seed, "rng seed"), "seed", largs.seed);
        overlay.track(lcmd->add_option("--log", largs.log, "jsonl training log path"), "log", largs.log);
        lcmd->add_flag("--merge", largs.merge, "fold adapters into backbone weights before saving");
        lcmd->add_option("--config", config_path, "json config file");
    }

    auto* ucmd = app.add_subcommand("tune-threshold", "Grid-search the decoding threshold on labeled data");
    struct {
        std::string ckpt_in, input, format = "jsonl", output;
        size_t stride = 64, context = 512, grid_size = 40;
        double grid_min = 1e-3, grid_max = 0.9;
    } uargs;
    {
        overlay.track(ucmd->add_option("--checkpoint", uargs.ckpt_in, "checkpoint"), "checkpoint",
                      uargs.ckpt_in);
        overlay.track(ucmd->add_option("--input", uargs.input, "labeled corpus"), "input", uargs.input);
        overlay.track(ucmd->add_option("--format", uargs.format, "lines|jsonl"), "format", uargs.format);
        overlay.track(ucmd->add_option("--output", uargs.output, "rewrite checkpoint with tuned alpha"), "output",
                      uargs.output);
        overlay.track(ucmd->add_option("--stride", uargs.stride, "inference stride"), "stride", uargs.stride);
        overlay.track(ucmd->add_option("--context", uargs.context, "inference context"), "context", uargs.context);
        overlay.track(ucmd->add_option("--grid-size", uargs.grid_size, "grid points"), "grid-size", uargs.grid_size);
        overlay.track(ucmd->add_option("--grid-min", uargs.grid_min, "smallest alpha"), "grid-min", uargs.grid_min);
        overlay.track(ucmd->add_option("--grid-max", uargs.grid_max, "largest alpha"), "grid-max", uargs.grid_max);
        ucmd->add_option("--config", config_path, "json config file");
    }

    auto* gcmd = app.add_subcommand("segment", "Segment text into sentences (JSON-lines on stdout)");
    struct {
        std::string ckpt_in, input, output, format = "lines";
        double alpha = -1.0;
        size_t stride = 64, context = 512, layers = 0, threads = 1;
        int lookahead = -2;  // -2 = keep checkpoint value
        bool probs = false;
    } gargs;
    {
        overlay.track(gcmd->add_option("--checkpoint", gargs.ckpt_in, "checkpoint"), "checkpoint",
                      gargs.ckpt_in);
        overlay.track(gcmd->add_option("--input", gargs.input, "input file (default stdin)"), "input", gargs.input);
        overlay.track(gcmd->add_option("--output", gargs.output, "output file (default stdout)"), "output",
                      gargs.output);
        overlay.track(gcmd->add_option("--format", gargs.format, "lines|jsonl"), "format", gargs.format);
        overlay.track(gcmd->add_option("--alpha", gargs.alpha, "decoding threshold (default from checkpoint)"),
                      "alpha", gargs.alpha);
        overlay.track(gcmd->add_option("--stride", gargs.stride, "window stride"), "stride", gargs.stride);
        overlay.track(gcmd->add_option("--context", gargs.context, "inference context"), "context", gargs.context);
        overlay.track(gcmd->add_option("--layers", gargs.layers, "truncate to first k layers"), "layers",
                      gargs.layers);
        overlay.track(gcmd->add_option("--lookahead", gargs.lookahead, "override total lookahead; -1 unlimited"),
                      "lookahead", gargs.lookahead);
        overlay.track(gcmd->add_option("--threads", gargs.threads, "parallel texts"), "threads", gargs.threads);
        gcmd->add_flag("--probs", gargs.probs, "include per-character probabilities");
        gcmd->add_option("--config", config_path, "json config file");
    }

    auto* ecmd = app.add_subcommand("evaluate", "Score a segmenter against gold boundaries");
    struct {
        std::string ckpt_in, input, format = "jsonl", pred, terminators = ".!?", abbrev;
        double alpha = -1.0;
        size_t stride = 64, context = 512, layers = 0, threads = 1;
        int lookahead = -2;
        bool per_language = false, include_terminal = false, asr_corrupt = false, rule = false;
    } eargs;
    {
        overlay.track(ecmd->add_option("--checkpoint", eargs.ckpt_in, "model checkpoint"), "checkpoint",
                      eargs.ckpt_in);
        overlay.track(ecmd->add_option("--input", eargs.input, "gold corpus"), "input", eargs.input);
        overlay.track(ecmd->add_option("--format", eargs.format, "lines|jsonl"), "format", eargs.format);
        overlay.track(ecmd->add_option("--pred", eargs.pred, "predicted segmentation jsonl to score"), "pred",
                      eargs.pred);
        overlay.track(ecmd->add_option("--alpha", eargs.alpha, "decoding threshold"), "alpha", eargs.alpha);
        overlay.track(ecmd->add_option("--stride", eargs.stride, "window stride"), "stride", eargs.stride);
        overlay.track(ecmd->add_option("--context", eargs.context, "inference context"), "context", eargs.context);
        overlay.track(ecmd->add_option("--layers", eargs.layers, "truncate to first k layers"), "layers",
                      eargs.layers);
        overlay.track(ecmd->add_option("--lookahead", eargs.lookahead, "override total lookahead"), "lookahead",
                      eargs.lookahead);
        overlay.track(ecmd->add_option("--threads", eargs.threads, "parallel sequences"), "threads", eargs.threads);
        overlay.track(ecmd->add_option("--terminators", eargs.terminators, "rule baseline terminators"),
                      "terminators", eargs.terminators);
        overlay.track(ecmd->add_option("--abbrev", eargs.abbrev, "rule baseline abbreviation file"), "abbrev",
                      eargs.abbrev);
        ecmd->add_flag("--rule", eargs.rule, "evaluate the rule-based baseline");
        ecmd->add_flag("--per-language", eargs.per_language, "emit per-language macro averages");
        ecmd->add_flag("--include-terminal", eargs.include_terminal, "score the forced terminal boundary");
        ecmd->add_flag("--asr-corrupt", eargs.asr_corrupt, "lowercase and strip punctuation before evaluating");
        ecmd->add_option("--config", config_path, "json config file");
    }

    auto* bcmd = app.add_subcommand("baseline", "Rule-based segmentation (JSON-lines on stdout)");
    struct {
        std::string input, output, format = "lines", terminators = ".!?", abbrev;
    } bargs;
    {
        overlay.track(bcmd->add_option("--input", bargs.input, "input file (default stdin)"), "input", bargs.input);
        overlay.track(bcmd->add_option("--output", bargs.output, "output file (default stdout)"), "output",
                      bargs.output);
        overlay.track(bcmd->add_option("--format", bargs.format, "lines|jsonl"), "format", bargs.format);
        overlay.track(bcmd->add_option("--terminators", bargs.terminators, "terminator characters"), "terminators",
                      bargs.terminators);
        overlay.track(bcmd->add_option("--abbrev", bargs.abbrev, "abbreviation file"), "abbrev", bargs.abbrev);
        bcmd->add_option("--config", config_path, "json config file");
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 vector parse order
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << e.what() << "\n\n" << app.help();
        return 1;
    }
    if (!config_path.empty()) overlay.load(config_path);
    overlay.apply();

    // Required values may come from the config file, so check after merging.
    auto require_opt = [](const std::string& value, const char* flag) {
        if (value.empty()) throw std::runtime_error(std::string("the ") + flag + " option is required");
    };
    if (tcmd->parsed()) require_opt(targs.input, "--input");
    if (pcmd->parsed()) {
        require_opt(pargs.input, "--input");
        require_opt(pargs.tokenizer, "--tokenizer");
    }
    if (scmd->parsed()) {
        require_opt(sargs.input, "--input");
        require_opt(sargs.ckpt_in, "--checkpoint");
    }
    if (lcmd->parsed()) {
        require_opt(largs.sentences, "--sentences");
        require_opt(largs.ckpt_in, "--checkpoint");
    }
    if (ucmd->parsed()) {
        require_opt(uargs.ckpt_in, "--checkpoint");
        require_opt(uargs.input, "--input");
    }
    if (gcmd->parsed()) require_opt(gargs.ckpt_in, "--checkpoint");
    if (ecmd->parsed()) require_opt(eargs.input, "--input");

    auto open_in = [&](const std::string& path) -> std::unique_ptr<std::istream> {
        if (path.empty()) return nullptr;
        auto f = std::make_unique<std::ifstream>(path, std::ios::binary);
        if (!*f) throw DataError("cannot open input file: " + path);
        return f;
    };
    auto open_out = [&](const std::string& path) -> std::unique_ptr<std::ostream> {
        if (path.empty()) return nullptr;
        auto f = std::make_unique<std::ofstream>(path, std::ios::binary);
        if (!*f) throw DataError("cannot open output file: " + path);
        return f;
    };

    if (tcmd->parsed()) {
        const auto docs = corpus::load_corpus(targs.input, parse_format(targs.format));
        std::vector<std::string> texts;
        for (const auto& d : docs)
            for (const auto& u : d.units) texts.push_back(u.text);
        tokenize::Tokenizer tok = targs.mode == "bpe" ? tokenize::Tokenizer::train_bpe(texts, targs.vocab_size)
                                                      : tokenize::Tokenizer::char_tokenizer(texts);
        tok.save(targs.output);
        out << "{\"vocab_size\":" << tok.vocab_size() << ",\"mode\":\"" << targs.mode << "\",\"output\":\""
            << targs.output << "\"}\n";
        return 0;
    }

    if (pcmd->parsed()) {
        const auto docs = corpus::load_corpus(pargs.input, parse_format(pargs.format));
        if (docs.empty()) throw DataError("pretrain: empty corpus");
        tokenize::Tokenizer tok = tokenize::Tokenizer::load(pargs.tokenizer);
        const auto punct = tokenize::punctuation_set(tok, language_corpora(docs), pargs.top_k_punct);

        model::ModelConfig mcfg;
        mcfg.vocab_size = tok.vocab_size();
        mcfg.dim = pargs.dim;
        mcfg.n_layers = pargs.layers;
        mcfg.n_heads = pargs.heads;
        mcfg.ffn_dim = pargs.ffn;
        mcfg.max_context = pargs.max_context;
        mcfg.lookahead_total = pargs.lookahead;
        mcfg.aux_vocab = punct.token_ids.size() + 1;
        model::ModelParams params = model::init_model(mcfg, mix_seed(pargs.seed, 0x1417ull));

        train::TrainData data;
        data.docs = docs;
        data.tok = &tok;
        data.punct = punct;
        data.corruption.p_remove_punct = pargs.p_remove;
        data.corruption.p_full_strip_sample = pargs.p_full_strip;
        data.context_tokens = pargs.train_context;
        data.disable_corruption = pargs.clean_only;

        train::TrainConfig tcfg;
        tcfg.stage = train::Stage::Pretrain;
        tcfg.batch_size = pargs.batch_size;
        tcfg.total_steps = pargs.steps;
        tcfg.lr_peak = pargs.lr;
        tcfg.warmup_steps = pargs.warmup;
        tcfg.aux_loss_weight = pargs.aux_weight;
        tcfg.weight_decay = pargs.weight_decay;
        tcfg.seed = pargs.seed;

        auto log = open_out(pargs.log);
        const auto report = train::train_stage(params, data, tcfg, log.get());

        checkpoint::Meta meta;
        meta.stage = "pretrain";
        meta.default_alpha = pargs.lookahead >= 0 ? 0.025 : 0.01;
        checkpoint::save(pargs.output, params, tok, meta);
        out << "{\"steps\":" << report.losses.size() << ",\"final_loss\":" << report.losses.back()
            << ",\"checkpoint\":\"" << pargs.output << "\"}\n";
        return 0;
    }

    if (scmd->parsed()) {
        auto ck = checkpoint::load(sargs.ckpt_in);
        const auto docs = corpus::load_corpus(sargs.input, parse_format(sargs.format));
        if (docs.empty()) throw DataError("train-sm: empty corpus");
        const auto punct = tokenize::punctuation_set(ck.tokenizer, language_corpora(docs), sargs.top_k_punct);

        train::TrainData data;
        data.docs = docs;
        data.tok = &ck.tokenizer;
        data.punct = punct;
        data.corruption.p_lower = sargs.p_lower;
        data.corruption.p_ugc_remove_all = sargs.p_ugc_remove_all;
        data.corruption.p_dup_trigger = sargs.p_dup;
        data.corruption.dup_geo_base = sargs.dup_base;
        data.corruption.p_space_remove = sargs.p_space_remove;
        data.corruption.p_space_add = sargs.p_space_add;
        data.context_tokens = sargs.train_context;
        data.geo_p = sargs.geo_p;
        data.disable_corruption = sargs.clean_only;

        train::TrainConfig tcfg;
        tcfg.stage = train::Stage::Sm;
        tcfg.batch_size = sargs.batch_size;
        tcfg.total_steps = sargs.steps;
        tcfg.lr_peak = sargs.lr;
        tcfg.warmup_steps = sargs.warmup;
        tcfg.aux_loss_weight = sargs.aux_weight;
        tcfg.weight_decay = sargs.weight_decay;
        tcfg.seed = sargs.seed;

        auto log = open_out(sargs.log);
        const auto report = train::train_stage(ck.params, data, tcfg, log.get());

        checkpoint::Meta meta = ck.meta;
        meta.stage = "sm";
        meta.default_alpha = 0.25;
        checkpoint::save(sargs.output, ck.params, ck.tokenizer, meta);
        out << "{\"steps\":" << report.losses.size() << ",\"final_loss\":" << report.losses.back()
            << ",\"checkpoint\":\"" << sargs.output << "\"}\n";
        return 0;
    }

    if (lcmd->parsed()) {
        auto ck = checkpoint::load(largs.ckpt_in);
        const auto docs = corpus::load_corpus(largs.sentences, parse_format(largs.format));
        model::LoraSpec spec;
        spec.rank = largs.rank;
        spec.scale = largs.scale;

        train::TrainConfig tcfg;
        tcfg.stage = train::Stage::Lora;
        tcfg.batch_size = largs.batch_size;
        tcfg.epochs = largs.epochs;
        tcfg.lr_peak = largs.lr;
        tcfg.weight_decay = largs.weight_decay;
        tcfg.seed = largs.seed;

        const auto report = train::adapt_lora(ck.params, docs, ck.tokenizer, spec, tcfg, largs.train_context);
        if (largs.merge) ck.params = model::merge_lora(ck.params);

        checkpoint::Meta meta = ck.meta;
        meta.stage = largs.merge ? "merged" : "lora";
        if (report.tuned_alpha) {
            meta.tuned_alpha = report.tuned_alpha;
            meta.default_alpha = *report.tuned_alpha;
        }
        checkpoint::save(largs.output, ck.params, ck.tokenizer, meta);
        out << "{\"steps\":" << report.train.losses.size() << ",\"tuned_alpha\":"
            << (report.tuned_alpha ? std::to_string(*report.tuned_alpha) : "null") << ",\"checkpoint\":\""
            << largs.output << "\"}\n";
        return 0;
    }

    if (ucmd->parsed()) {
        auto ck = checkpoint::load(uargs.ckpt_in);
        const auto docs = corpus::load_corpus(uargs.input, parse_format(uargs.format));
        model::ModelParams params = ck.params.has_adapters() ? model::merge_lora(ck.params) : ck.params;

        corpus::PackingConfig pcfg;
        pcfg.context_tokens = std::min(uargs.context, params.config.max_context);
        const auto packed = corpus::pack_chunks(docs, pcfg, ck.tokenizer, 0);
        if (packed.chunks.empty()) throw DataError("tune-threshold: no labeled chunks");

        std::vector<double> grid(uargs.grid_size);
        const double lo = std::log(uargs.grid_min), hi = std::log(uargs.grid_max);
        for (size_t i = 0; i < grid.size(); ++i)
            grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) /
                               static_cast<double>(std::max<size_t>(1, grid.size() - 1)));

        infer::DecodeConfig dec;
        dec.stride = uargs.stride;
        dec.context = uargs.context;
        const double alpha = train::tune_threshold(params, ck.tokenizer, packed.chunks, grid, dec);
        if (!uargs.output.empty()) {
            checkpoint::Meta meta = ck.meta;
            meta.tuned_alpha = alpha;
            meta.default_alpha = alpha;
            checkpoint::save(uargs.output, ck.params, ck.tokenizer, meta);
        }
        out << "{\"alpha\":" << alpha << "}\n";
        return 0;
    }

    if (gcmd->parsed()) {
        auto ck = checkpoint::load(gargs.ckpt_in);
        const double alpha = gargs.alpha >= 0.0 ? gargs.alpha
                                                : (ck.meta.tuned_alpha ? *ck.meta.tuned_alpha : ck.meta.default_alpha);
        model::ModelParams params = prepare_model(ck, gargs.layers, gargs.lookahead);

        infer::DecodeConfig dec;
        dec.alpha = alpha;
        dec.stride = gargs.stride;
        dec.context = gargs.context;

        auto fin = open_in(gargs.input);
        auto fout = open_out(gargs.output);
        std::istream& is = fin ? *fin : in;
        std::ostream& os = fout ? *fout : out;

        const auto records = read_records(is, gargs.format);
        std::vector<infer::SegmentationResult> results(records.size());
        const size_t n_threads = std::max<size_t>(1, gargs.threads);
        if (n_threads == 1 || records.size() < 2) {
            for (size_t i = 0; i < records.size(); ++i)
                results[i] = infer::segment(params, records[i].text, ck.tokenizer, dec);
        } else {
            std::vector<std::thread> pool;
            std::atomic<size_t> next{0};
            for (size_t w = 0; w < std::min(n_threads, records.size()); ++w)
                pool.emplace_back([&]() {
                    for (size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1))
                        results[i] = infer::segment(params, records[i].text, ck.tokenizer, dec);
                });
            for (auto& t : pool) t.join();
        }
        for (size_t i = 0; i < records.size(); ++i)
            write_segmentation(os, records[i].text, results[i], gargs.probs);
        return 0;
    }

    if (ecmd->parsed()) {
        auto docs = corpus::load_corpus(eargs.input, parse_format(eargs.format));
        if (docs.empty()) throw DataError("evaluate: empty corpus");

        eval::EvalOptions opts;
        opts.include_terminal = eargs.include_terminal;
        opts.threads = eargs.threads;

        const tokenize::Tokenizer* tok_ptr = nullptr;
        tokenize::Tokenizer tok_storage;
        eval::BoundaryPredictor predict;
        model::ModelParams params;

        if (!eargs.pred.empty()) {
            // Score externally produced segmentations; NW-project boundaries
            // when the prediction altered the text.
            std::ifstream pf(eargs.pred);
            if (!pf) throw DataError("cannot open predictions: " + eargs.pred);
            const auto preds = read_records(pf, "jsonl");
            std::vector<std::string> gold_texts;
            for (const auto& d : docs) {
                std::string t;
                for (size_t i = 0; i < d.units.size(); ++i) {
                    if (i) t += ' ';
                    t += d.units[i].text;
                }
                gold_texts.push_back(std::move(t));
            }
            if (preds.size() != gold_texts.size())
                throw DataError("evaluate: prediction count (" + std::to_string(preds.size()) +
                                ") does not match document count (" + std::to_string(gold_texts.size()) + ")");
            std::map<std::string, std::set<size_t>> by_text;
            for (size_t i = 0; i < preds.size(); ++i) {
                std::set<size_t> b = preds[i].boundaries.value_or(std::set<size_t>{});
                if (preds[i].text != gold_texts[i])
                    b = eval::project_boundaries(preds[i].text, b, gold_texts[i]);
                by_text[gold_texts[i]] = std::move(b);
            }
            predict = [by_text](const std::string& text) {
                auto it = by_text.find(text);
                return it == by_text.end() ? std::set<size_t>{} : it->second;
            };
        } else if (eargs.rule) {
            const auto terms = baseline::terminators_from_string(eargs.terminators);
            const auto abbrevs = eargs.abbrev.empty() ? std::set<std::string>{}
                                                      : baseline::load_abbreviations(eargs.abbrev);
            predict = [terms, abbrevs](const std::string& text) {
                const auto res = baseline::rule_segment(text, terms, abbrevs);
                // Normalize to the corpus convention: the boundary sits on the
                // last non-space character of each segment.
                std::set<size_t> b;
                const auto d = uni::decode(text);
                size_t pos = 0;
                for (const auto& s : res.sentences) {
                    const size_t len = uni::length(s);
                    size_t last = pos + len - 1;
                    while (last > pos && uni::is_space(d.cps[last])) --last;
                    b.insert(last);
                    pos += len;
                }
                return b;
            };
        } else if (!eargs.ckpt_in.empty()) {
            auto ck = checkpoint::load(eargs.ckpt_in);
            const double alpha = eargs.alpha >= 0.0
                                     ? eargs.alpha
                                     : (ck.meta.tuned_alpha ? *ck.meta.tuned_alpha : ck.meta.default_alpha);
            params = prepare_model(ck, eargs.layers, eargs.lookahead);
            tok_storage = std::move(ck.tokenizer);
            tok_ptr = &tok_storage;
            infer::DecodeConfig dec;
            dec.alpha = alpha;
            dec.stride = eargs.stride;
            dec.context = eargs.context;
            predict = [&params, tok_ptr, dec](const std::string& text) {
                return infer::segment(params, text, *tok_ptr, dec).boundaries;
            };
            if (eargs.asr_corrupt) {
                const auto punct = tokenize::punctuation_set(tok_storage, language_corpora(docs));
                docs = eval::asr_corrupt_eval(docs, tok_storage, punct);
            }
        } else {
            throw CLI::ValidationError("evaluate", "one of --checkpoint, --pred, or --rule is required");
        }

        const auto report = eval::evaluate_documents(docs, predict, tok_ptr, opts);
        out << eval::report_to_json(report, eargs.per_language) << "\n";
        return 0;
    }

    if (bcmd->parsed()) {
        const auto terms = baseline::terminators_from_string(bargs.terminators);
        const auto abbrevs = bargs.abbrev.empty() ? std::set<std::string>{}
                                                  : baseline::load_abbreviations(bargs.abbrev);
        auto fin = open_in(bargs.input);
        auto fout = open_out(bargs.output);
        std::istream& is = fin ? *fin : in;
        std::ostream& os = fout ? *fout : out;
        for (const auto& rec : read_records(is, bargs.format))
            write_segmentation(os, rec.text, baseline::rule_segment(rec.text, terms, abbrevs), false);
        return 0;
    }

    return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    try {
        return run_impl(args, in, out, err);
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        err << "training error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, in, out, err);
}

}  // namespace satseg::cli
