// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <thread>
#include <utility>

#include "cmae/analysis.hpp"
#include "cmae/checkpoint.hpp"
#include "cmae/dataset.hpp"
#include "cmae/errors.hpp"
#include "cmae/flops.hpp"
#include "cmae/image_io.hpp"
#include "cmae/parallel.hpp"
#include "cmae/training.hpp"

namespace cmae::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using json_ptr = nlohmann::json::json_pointer;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Ties each option to a manifest path so configuration resolves as
// flags > manifest > defaults, and the resolved values serialize back.
class Binder {
 public:
  template <typename V>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& pointer, V& var,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(flag, var, help)->capture_default_str();
    bind(opt, pointer, var);
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& flag, const std::string& pointer, bool& var,
                        const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, var, help)->capture_default_str();
    bind(opt, pointer, var);
    return opt;
  }

  void apply_manifest(const json& manifest) const {
    for (const auto& f : from_manifest_) f(manifest);
  }
  void write(json& j) const {
    for (const auto& f : to_json_) f(j);
  }

 private:
  template <typename V>
  void bind(CLI::Option* opt, const std::string& pointer, V& var) {
    const json_ptr ptr(pointer);
    from_manifest_.push_back([opt, ptr, &var](const json& m) {
      if (opt->count() == 0 && m.contains(ptr)) var = m.at(ptr).get<V>();
    });
    to_json_.push_back([ptr, &var](json& j) { j[ptr] = var; });
  }

  std::vector<std::function<void(const json&)>> from_manifest_;
  std::vector<std::function<void(json&)>> to_json_;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("CMAE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("CMAE_SEED must be an unsigned integer, got '") + env + "'");
    }
  }
  return 0;
}

struct ModelArgs {
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t enc_dim = 64;
  std::size_t enc_depth = 4;
  std::size_t enc_heads = 4;
  std::size_t dec_dim = 32;
  std::size_t dec_depth = 12;
  std::size_t dec_heads = 4;
  double mlp_ratio = 4.0;
  std::string variant = "cross";
  std::size_t fused_maps = 0;
  std::string encoder_norm = "auto";
  bool norm_pix = true;
  double mask_ratio = 0.75;
  double pred_ratio = 0.75;

  ModelConfig config() const {
    ModelConfig c = make_model_config(parse_variant(variant));
    c.encoder.image_size = image_size;
    c.encoder.patch_size = patch_size;
    c.encoder.channels = channels;
    c.encoder.dim = enc_dim;
    c.encoder.depth = enc_depth;
    c.encoder.heads = enc_heads;
    c.encoder.mlp_ratio = mlp_ratio;
    if (encoder_norm == "on") {
      c.encoder.final_norm = true;
    } else if (encoder_norm == "off") {
      c.encoder.final_norm = false;
    } else if (encoder_norm != "auto") {
      throw ConfigError("--encoder-norm must be auto, on or off");
    }
    c.decoder.dim = dec_dim;
    c.decoder.depth = dec_depth;
    c.decoder.heads = dec_heads;
    c.decoder.mlp_ratio = mlp_ratio;
    c.decoder.fused_maps = fused_maps;
    c.norm_pix_loss = norm_pix;
    c.validate();
    if (!(mask_ratio > 0 && mask_ratio < 1)) throw ConfigError("--mask-ratio must lie in (0, 1)");
    if (!(pred_ratio > 0 && pred_ratio <= mask_ratio)) {
      throw ConfigError("--pred-ratio must lie in (0, mask ratio]; got " + fmt_double(pred_ratio) + " with mask ratio " +
                        fmt_double(mask_ratio));
    }
    return c;
  }
};

void add_model_options(CLI::App* app, Binder& b, ModelArgs& m) {
  b.add(app, "--image-size", "/model/image_size", m.image_size, "Image side in pixels");
  b.add(app, "--patch-size", "/model/patch_size", m.patch_size, "Patch side in pixels");
  b.add(app, "--channels", "/model/channels", m.channels, "Image channels");
  b.add(app, "--enc-dim", "/model/enc_dim", m.enc_dim, "Encoder width");
  b.add(app, "--enc-depth", "/model/enc_depth", m.enc_depth, "Encoder blocks (n)");
  b.add(app, "--enc-heads", "/model/enc_heads", m.enc_heads, "Encoder attention heads");
  b.add(app, "--dec-dim", "/model/dec_dim", m.dec_dim, "Decoder width");
  b.add(app, "--decoder-depth", "/model/decoder_depth", m.dec_depth, "Decoder blocks (D)");
  b.add(app, "--dec-heads", "/model/dec_heads", m.dec_heads, "Decoder attention heads");
  b.add(app, "--mlp-ratio", "/model/mlp_ratio", m.mlp_ratio, "MLP hidden width over model width");
  b.add(app, "--decoder-variant,--variant", "/model/decoder_variant", m.variant, "self, cross or cross_self")
      ->check(CLI::IsMember({"self", "cross", "cross_self", "self_attn", "cross_attn", "cross_plus_self"}));
  b.add(app, "--fused-maps", "/model/fused_maps", m.fused_maps,
        "Encoder maps fused per decoder block (0 = all n+1)");
  b.add(app, "--encoder-norm", "/model/encoder_norm", m.encoder_norm,
        "Final encoder LayerNorm: auto (on for self, off for cross), on, off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  b.add(app, "--norm-pix", "/model/norm_pix_loss", m.norm_pix, "Standardize target patches (true/false)");
  b.add(app, "--mask-ratio", "/masking/mask_ratio", m.mask_ratio, "Mask ratio p");
  b.add(app, "--pred-ratio", "/masking/pred_ratio", m.pred_ratio, "Prediction ratio gamma (<= p)");
}

struct CommonArgs {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string manifest;
};

void add_common_options(CLI::App* app, Binder& b, CommonArgs& c) {
  b.add(app, "--seed", "/seed", c.seed, "Seed (default from CMAE_SEED, else 0)");
  b.add(app, "--threads", "/threads", c.threads, "Worker threads (0 = all cores; 1 is bit-exact reproducible)");
  app->add_option("--manifest", c.manifest, "Manifest JSON supplying defaults for unset flags");
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read manifest '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  os << j.dump(2) << "\n";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void apply_threads(std::size_t threads) {
  set_num_threads(threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads);
}

// Resolves the manifest, falling back to `fallback_dir`/manifest.json.
json load_manifest(const std::string& explicit_path, const fs::path& fallback_dir) {
  if (!explicit_path.empty()) return read_json(explicit_path);
  if (!fallback_dir.empty() && fs::exists(fallback_dir / "manifest.json")) return read_json(fallback_dir / "manifest.json");
  return json::object();
}

json data_record(const std::string& path, const Dataset& d) {
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(dataset_fingerprint(d)));
  return {{"path", path}, {"count", d.size()}, {"fingerprint", fp}};
}

std::string plan_line(const MaskPlan& plan) {
  json j = {{"seed", plan.seed}, {"visible", plan.visible}, {"predicted", plan.predicted}};
  return j.dump();
}

MaskedAutoencoder<float> load_model(const ModelConfig& config, std::uint64_t seed, const std::string& checkpoint) {
  MaskedAutoencoder<float> model(config, seed);
  if (!checkpoint.empty()) model.load_state(load_checkpoint(checkpoint));
  return model;
}

fs::path parent_of(const std::string& file) {
  if (file.empty()) return {};
  const fs::path p = fs::path(file).parent_path();
  return p.empty() ? fs::path(".") : p;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  CommonArgs common;
  std::string out;
  std::size_t count = 1000;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  bool labeled = false;
};

int cmd_gen_data(const GenArgs& a, const Binder& b, std::ostream& out) {
  const Dataset d = gen_synthetic(a.count, a.image_size, a.image_size, a.common.seed, a.labeled, a.channels);
  const fs::path path(a.out);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  save_dataset(path, d);
  json m;
  m["command"] = "gen-data";
  b.write(m);
  m["data"] = data_record(a.out, d);
  write_json(path.string() + ".manifest.json", m);
  out << "wrote " << d.size() << " images (" << a.image_size << "x" << a.image_size << "x" << a.channels
      << (a.labeled ? ", labeled" : "") << ") to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
  CommonArgs common;
  ModelArgs model;
  std::string data;
  std::string out;
  double base_lr = 1.5e-4;
  std::vector<double> betas{0.9, 0.95};
  double weight_decay = 0.05;
  double eps = 1e-8;
  std::size_t batch_size = 128;
  std::size_t accum_steps = 1;
  double epochs = 10;
  double warmup_epochs = 1;
  std::size_t max_steps = 0;
  std::size_t record_plans = 10;
  bool flip = true;
};

int cmd_pretrain(const PretrainArgs& a, const Binder& b, std::ostream& out) {
  const ModelConfig mc = a.model.config();
  if (a.betas.size() != 2) throw ConfigError("--betas takes two values, e.g. 0.9,0.95");
  PretrainConfig pc;
  pc.optim.base_lr = a.base_lr;
  pc.optim.beta1 = a.betas[0];
  pc.optim.beta2 = a.betas[1];
  pc.optim.weight_decay = a.weight_decay;
  pc.optim.eps = a.eps;
  pc.optim.batch_size = a.batch_size;
  pc.optim.accum_steps = a.accum_steps;
  pc.optim.total_epochs = a.epochs;
  pc.optim.warmup_epochs = a.warmup_epochs;
  pc.optim.validate();
  pc.mask_ratio = a.model.mask_ratio;
  pc.pred_ratio = a.model.pred_ratio;
  pc.seed = a.common.seed;
  pc.flip = a.flip;
  pc.max_steps = a.max_steps;
  pc.record_plan_steps = a.record_plans;

  const Dataset data = load_dataset(a.data);
  const fs::path dir(a.out);
  ensure_dir(dir);
  json manifest;
  manifest["command"] = "pretrain";
  b.write(manifest);
  manifest["data"] = data_record(a.data, data);
  manifest["effective_lr"] = scaled_lr(pc.optim.base_lr, pc.optim.batch_size, pc.mask_ratio, pc.pred_ratio);
  write_json(dir / "manifest.json", manifest);

  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw DataError("cannot write metrics to '" + (dir / "metrics.csv").string() + "'");
  csv << "epoch,step,lr,loss,variant,p,gamma,seed\n";
  const std::string tail = "," + std::string(variant_name(mc.decoder.variant)) + "," + fmt_double(pc.mask_ratio) +
                           "," + fmt_double(pc.pred_ratio) + "," + std::to_string(pc.seed) + "\n";

  MaskedAutoencoder<float> model(mc, a.common.seed);
  const PretrainResult result = pretrain(model, data, pc, [&](const StepRecord& r) {
    csv << r.epoch << "," << r.step << "," << fmt_double(r.lr) << "," << fmt_double(r.loss) << tail;
    csv.flush();
  });
  save_checkpoint(dir / "checkpoint.cmae", model.state());

  std::ofstream plans(dir / "mask_plans.jsonl");
  for (std::size_t s = 0; s < result.plans.size(); ++s) {
    for (const auto& p : result.plans[s]) plans << "{\"step\":" << s + 1 << ",\"plan\":" << plan_line(p) << "}\n";
  }

  out << "peak lr " << fmt_double(result.peak_lr) << ", " << result.steps.size() << " steps\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    out << "epoch " << e + 1 << " loss " << fmt_double(result.epoch_loss[e]) << "\n";
  }
  out << "checkpoint " << (dir / "checkpoint.cmae").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- finetune

struct FinetuneArgs {
  CommonArgs common;
  ModelArgs model;
  std::string checkpoint;
  std::string data;
  std::string test_data;
  std::string out;
  std::string mode = "linear_probe";
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double test_fraction = 0.2;
};

int cmd_finetune(const FinetuneArgs& a, const Binder& b, std::ostream& out) {
  const ModelConfig mc = a.model.config();
  FinetuneConfig fc;
  fc.mode = a.mode == "full" ? FinetuneMode::Full : FinetuneMode::LinearProbe;
  fc.epochs = a.epochs;
  fc.batch_size = a.batch_size;
  fc.lr = a.lr;
  fc.weight_decay = a.weight_decay;
  fc.seed = a.common.seed;

  Dataset train = load_dataset(a.data);
  if (!train.labeled) throw DataError("finetune needs a labeled dataset; '" + a.data + "' has no labels");
  Dataset test;
  if (!a.test_data.empty()) {
    test = load_dataset(a.test_data);
  } else {
    if (!(a.test_fraction > 0 && a.test_fraction < 1)) throw ConfigError("--test-fraction must lie in (0, 1)");
    const auto n_test = static_cast<std::size_t>(static_cast<double>(train.size()) * a.test_fraction);
    test = train.slice(train.size() - n_test, n_test);
    train = train.slice(0, train.size() - n_test);
  }
  MaskedAutoencoder<float> model(mc, a.common.seed);
  if (!a.checkpoint.empty()) model.load_state(load_checkpoint(a.checkpoint), "encoder.");
  const FinetuneResult r = finetune(model.encoder, train, test, fc);

  const fs::path dir(a.out);
  ensure_dir(dir);
  json manifest;
  manifest["command"] = "finetune";
  b.write(manifest);
  manifest["data"] = data_record(a.data, train);
  write_json(dir / "manifest.json", manifest);
  std::ofstream csv(dir / "accuracy.csv");
  csv << "mode,train_accuracy,test_accuracy,final_loss\n"
      << a.mode << "," << fmt_double(r.train_accuracy) << "," << fmt_double(r.test_accuracy) << ","
      << fmt_double(r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()) << "\n";
  out << a.mode << ": train accuracy " << fmt_double(r.train_accuracy) << ", test accuracy "
      << fmt_double(r.test_accuracy) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- reconstruct

struct ImageArgs {
  CommonArgs common;
  ModelArgs model;
  std::string checkpoint;
  std::string data;
  std::string out;
  std::size_t index = 0;
  std::size_t count = 1;
  std::size_t scale = 4;
};

struct LoadedImage {
  std::vector<float> pixels;
  Tensor<float> patches;
  MaskPlan plan;
};

LoadedImage load_image(const Dataset& data, std::size_t index, const ModelConfig& mc, double p, double gamma,
                       std::uint64_t seed) {
  if (index >= data.size()) {
    throw ConfigError("image index " + std::to_string(index) + " out of range (dataset has " +
                      std::to_string(data.size()) + ")");
  }
  LoadedImage img;
  img.pixels = to_float_images(data, index, 1);
  img.patches = patchify_batch<float>(img.pixels, 1, mc.encoder);
  img.plan = make_mask_plan(mc.encoder.num_patches(), p, gamma, derive_seed({seed, 0x76697375ull, index}));
  return img;
}

// Prediction rows in pixel space, placed at their patch positions.
std::vector<float> pixel_rows(const MaskedAutoencoder<float>& model, const LoadedImage& img,
                              const std::vector<std::size_t>& rows, std::span<const float> values) {
  const std::size_t pd = model.config().encoder.patch_dim();
  std::vector<float> out(values.begin(), values.end());
  if (model.config().norm_pix_loss) {
    const auto stats = patch_normalize(img.patches).stats;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < pd; ++c) {
        out[r * pd + c] = static_cast<float>(values[r * pd + c] * stats.std[rows[r]] + stats.mean[rows[r]]);
      }
    }
  }
  return out;
}

void check_image_geometry(const Dataset& data, const ModelConfig& mc) {
  if (data.height != mc.encoder.image_size || data.width != mc.encoder.image_size ||
      data.channels != mc.encoder.channels) {
    throw ConfigError("dataset images are " + std::to_string(data.height) + "x" + std::to_string(data.width) + "x" +
                      std::to_string(data.channels) + ", model expects " + std::to_string(mc.encoder.image_size) +
                      " square with " + std::to_string(mc.encoder.channels) + " channels");
  }
}

int cmd_reconstruct(const ImageArgs& a, const Binder& b, std::ostream& out) {
  const ModelConfig mc = a.model.config();
  const Dataset data = load_dataset(a.data);
  check_image_geometry(data, mc);
  const auto model = load_model(mc, a.common.seed, a.checkpoint);
  const fs::path dir(a.out);
  ensure_dir(dir);
  json manifest;
  manifest["command"] = "reconstruct";
  b.write(manifest);
  manifest["data"] = data_record(a.data, data);
  write_json(dir / "manifest.json", manifest);

  const auto geom = mc.encoder.geometry();
  const std::size_t pd = mc.encoder.patch_dim();
  NoGradGuard no_grad;
  for (std::size_t i = a.index; i < a.index + a.count; ++i) {
    const LoadedImage img = load_image(data, i, mc, a.model.mask_ratio, a.model.pred_ratio, a.common.seed);
    const std::vector<MaskPlan> plans{img.plan};
    const Tensor<float> pred = model.predict(img.patches, plans);
    const auto& rows = model.variant() == DecoderVariant::SelfAttn ? img.plan.masked : img.plan.predicted;
    std::vector<float> values;
    if (model.variant() == DecoderVariant::SelfAttn) {
      for (std::size_t r : rows) {
        values.insert(values.end(), pred.data().begin() + static_cast<std::ptrdiff_t>(r * pd),
                      pred.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * pd));
      }
    } else {
      values.assign(pred.data().begin(), pred.data().end());
    }
    const auto recon_rows = pixel_rows(model, img, rows, values);

    const auto src = img.patches.data();
    std::vector<float> masked(src.begin(), src.end());
    std::vector<float> recon(src.begin(), src.end());
    for (std::size_t m : img.plan.masked) {
      std::fill_n(masked.begin() + static_cast<std::ptrdiff_t>(m * pd), pd, 0.5f);
      std::fill_n(recon.begin() + static_cast<std::ptrdiff_t>(m * pd), pd, 0.5f);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy_n(recon_rows.begin() + static_cast<std::ptrdiff_t>(r * pd), pd,
                  recon.begin() + static_cast<std::ptrdiff_t>(rows[r] * pd));
    }
    const std::vector<std::vector<float>> panels{
        img.pixels, unpatchify<float>(masked, geom, mc.encoder.patch_size),
        unpatchify<float>(recon, geom, mc.encoder.patch_size)};
    const auto tiled = tile_horizontal(panels, geom.height, geom.width, geom.channels);
    const std::size_t tw = 3 * geom.width + 2;
    const auto big = upscale(tiled, geom.height, tw, geom.channels, a.scale);
    char name[64];
    std::snprintf(name, sizeof(name), "recon_%05zu.ppm", i);
    write_ppm(dir / name, big, geom.height * a.scale, tw * a.scale, geom.channels);
    out << "wrote " << (dir / name).string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- analyze-attn

int cmd_analyze_attn(const ImageArgs& a, const Binder& b, std::ostream& out) {
  const ModelConfig mc = a.model.config();
  if (mc.decoder.variant != DecoderVariant::SelfAttn) {
    throw ConfigError("analyze-attn needs --decoder-variant self (cross-attention decoders have no mask-to-mask "
                      "attention)");
  }
  const Dataset data = load_dataset(a.data);
  check_image_geometry(data, mc);
  const auto model = load_model(mc, a.common.seed, a.checkpoint);
  const std::size_t count = std::min(a.count, data.size() - std::min(a.index, data.size()));
  if (count == 0) throw ConfigError("no images selected");
  const auto images = to_float_images(data, a.index, count);
  const AttentionStats s = attention_stats(model, patchify_batch<float>(images, count, mc.encoder),
                                           a.model.mask_ratio, derive_seed({a.common.seed, 0x6174746eull}));
  const fs::path dir(a.out);
  ensure_dir(dir);
  json manifest;
  manifest["command"] = "analyze-attn";
  b.write(manifest);
  manifest["data"] = data_record(a.data, data);
  write_json(dir / "manifest.json", manifest);
  std::ofstream csv(dir / "attention_stats.csv");
  csv << "normalization,mask_to_mask,mask_to_visible,images,seq_len\n";
  csv << "per_pair," << fmt_double(s.per_pair.mask_to_mask) << "," << fmt_double(s.per_pair.mask_to_visible) << ","
      << s.images_seen << "," << s.seq_len << "\n";
  csv << "per_pair_times_seqlen," << fmt_double(s.per_pair_times_seqlen.mask_to_mask) << ","
      << fmt_double(s.per_pair_times_seqlen.mask_to_visible) << "," << s.images_seen << "," << s.seq_len << "\n";
  out << "images " << s.images_seen << ", sequence length " << s.seq_len << " (class token counted as visible)\n"
      << "per_pair:              mask->mask " << fmt_double(s.per_pair.mask_to_mask) << "  mask->visible "
      << fmt_double(s.per_pair.mask_to_visible) << "\n"
      << "per_pair_times_seqlen: mask->mask " << fmt_double(s.per_pair_times_seqlen.mask_to_mask)
      << "  mask->visible " << fmt_double(s.per_pair_times_seqlen.mask_to_visible) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- decompose

int cmd_decompose(const ImageArgs& a, const Binder& b, std::ostream& out) {
  const ModelConfig mc = a.model.config();
  const Dataset data = load_dataset(a.data);
  check_image_geometry(data, mc);
  const auto model = load_model(mc, a.common.seed, a.checkpoint);
  const LoadedImage img = load_image(data, a.index, mc, a.model.mask_ratio, a.model.pred_ratio, a.common.seed);
  const std::vector<MaskPlan> plans{img.plan};
  ReconstructionStack stack = per_block_decomposition(model, img.patches, plans).front();
  if (mc.norm_pix_loss) stack = stack.denormalized(patch_normalize(img.patches).stats);

  const fs::path dir(a.out);
  ensure_dir(dir);
  json manifest;
  manifest["command"] = "decompose";
  b.write(manifest);
  manifest["data"] = data_record(a.data, data);
  write_json(dir / "manifest.json", manifest);

  const auto geom = mc.encoder.geometry();
  const std::size_t pd = mc.encoder.patch_dim();
  const std::size_t n = mc.encoder.num_patches();
  auto render = [&](const std::vector<double>& rows, double offset) {
    std::vector<double> patches(n * pd, 0.0);
    for (std::size_t r = 0; r < stack.rows.size(); ++r) {
      for (std::size_t c = 0; c < pd; ++c) patches[stack.rows[r] * pd + c] = rows[r * pd + c];
    }
    std::vector<float> shifted(patches.size());
    const auto image = unpatchify<double>(patches, geom, mc.encoder.patch_size);
    for (std::size_t i = 0; i < image.size(); ++i) shifted[i] = static_cast<float>(image[i] + offset);
    return std::pair{image, shifted};
  };

  std::ofstream csv(dir / "decomposition.csv");
  csv << "term,max_abs,high_pass_fraction\n";
  auto emit = [&](const std::string& term, const std::vector<double>& rows, double offset, std::size_t k) {
    const auto [image, shown] = render(rows, offset);
    double max_abs = 0.0;
    for (double v : rows) max_abs = std::max(max_abs, std::abs(v));
    csv << term << "," << fmt_double(max_abs) << ","
        << fmt_double(high_pass_fraction(image, geom.height, geom.width, geom.channels)) << "\n";
    char name[64];
    std::snprintf(name, sizeof(name), "decomp_%02zu_%s.ppm", k, term.c_str());
    write_ppm(dir / name, upscale(shown, geom.height, geom.width, geom.channels, a.scale), geom.height * a.scale,
              geom.width * a.scale, geom.channels);
  };
  emit("base", stack.base, 0.0, 0);
  for (std::size_t i = 0; i < stack.contributions.size(); ++i) {
    emit("block" + std::to_string(i + 1), stack.contributions[i], 0.5, i + 1);
  }
  emit("total", stack.total, 0.0, stack.contributions.size() + 1);
  out << "identity error (max abs) " << fmt_double(stack.identity_error) << ", surrogate gap "
      << fmt_double(stack.surrogate_gap) << "\n";

  if (model.variant() != DecoderVariant::SelfAttn && model.cross_decoder.fusion.weight.defined()) {
    const auto& w = model.cross_decoder.fusion.weight;
    const std::size_t rows = w.dim(0);
    const std::size_t cols = w.dim(1);
    const auto map = interblock_weight_map(w, true);
    std::ofstream wcsv(dir / "interblock_weights.csv");
    wcsv << "decoder_block";
    for (std::size_t j = 0; j < cols; ++j) wcsv << ",map" << model.cross_decoder.fusion.selection[j];
    wcsv << "\n";
    double peak = 0.0;
    for (double v : map) peak = std::max(peak, v);
    std::vector<float> gray(map.size());
    for (std::size_t r = 0; r < rows; ++r) {
      wcsv << r + 1;
      for (std::size_t j = 0; j < cols; ++j) {
        wcsv << "," << fmt_double(map[r * cols + j]);
        gray[r * cols + j] = peak > 0 ? static_cast<float>(map[r * cols + j] / peak) : 0.0f;
      }
      wcsv << "\n";
    }
    write_ppm(dir / "interblock_weights.ppm", upscale(gray, rows, cols, 1, 16), rows * 16, cols * 16, 1);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- flops

int cmd_flops(const CommonArgs&, const ModelArgs& m, const Binder&, std::ostream& out) {
  const ModelConfig mc = m.config();
  const FlopsReport r = count_flops(mc.encoder, mc.decoder, m.mask_ratio, m.pred_ratio);
  DecoderConfig base = mc.decoder;
  base.variant = DecoderVariant::SelfAttn;
  base.depth = 8;
  const FlopsReport mae = count_flops(mc.encoder, base, m.mask_ratio, m.mask_ratio);
  auto g = [](std::uint64_t v) { return fmt_double(static_cast<double>(v) / 1e9); };
  out << "# " << flops_convention() << "\n";
  out << "variant " << r.variant << ", N=" << r.num_patches << ", visible=" << r.visible << ", queries=" << r.queries
      << ", enc_dim=" << r.encoder_dim << ", dec_dim=" << r.decoder_dim << ", D=" << r.decoder_depth
      << ", k=" << r.fused_maps << ", p=" << fmt_double(r.mask_ratio) << ", gamma=" << fmt_double(r.pred_ratio)
      << "\n";
  out << "component,gflops\n"
      << "encoder," << g(r.encoder) << "\n"
      << "decoder_embed," << g(r.decoder_embed) << "\n"
      << "decoder_attention," << g(r.decoder_attention) << "\n"
      << "decoder_mlp," << g(r.decoder_mlp) << "\n"
      << "head," << g(r.head) << "\n"
      << "fusion," << g(r.fusion) << "\n"
      << "decoder_total," << g(r.decoder()) << "\n"
      << "total," << g(r.total()) << "\n";
  out << "mae_baseline_decoder (self, D=8)," << g(mae.decoder()) << "\n";
  out << "decoder_ratio_vs_mae," << fmt_double(static_cast<double>(mae.decoder()) / static_cast<double>(r.decoder()))
      << "\n";
  return kExitOk;
}

template <typename F>
int guarded(F&& f, std::ostream& err) {
  try {
    return f();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::uint64_t seed = 0;
  const int seed_status = guarded(
      [&] {
        seed = default_seed();
        return kExitOk;
      },
      err);
  if (seed_status != kExitOk) return seed_status;

  CLI::App app("Masked image modeling with cross-attention decoders", "cmae");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Binder gen_b, pre_b, ft_b, rec_b, attn_b, dec_b, flops_b;

  GenArgs gen;
  gen.common.seed = seed;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a seeded synthetic shapes dataset");
  add_common_options(gen_cmd, gen_b, gen.common);
  gen_cmd->add_option("--out", gen.out, "Output dataset file (required)");
  gen_b.add(gen_cmd, "--count", "/count", gen.count, "Number of images");
  gen_b.add(gen_cmd, "--image-size", "/image_size", gen.image_size, "Image side in pixels");
  gen_b.add(gen_cmd, "--channels", "/channels", gen.channels, "Channels (1 or 3)");
  gen_b.add_flag(gen_cmd, "--labeled", "/labeled", gen.labeled, "Store the dominant-shape class label");

  PretrainArgs pre;
  pre.common.seed = seed;
  auto* pre_cmd = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  add_common_options(pre_cmd, pre_b, pre.common);
  add_model_options(pre_cmd, pre_b, pre.model);
  pre_b.add(pre_cmd, "--data", "/data_path", pre.data, "Dataset file");
  pre_cmd->add_option("--out", pre.out, "Output directory (required)");
  pre_b.add(pre_cmd, "--base-lr", "/optim/base_lr", pre.base_lr, "Base learning rate (scaled by gamma*batch/(256*p))");
  pre_b.add(pre_cmd, "--betas", "/optim/betas", pre.betas, "AdamW betas")->delimiter(',')->expected(2);
  pre_b.add(pre_cmd, "--weight-decay", "/optim/weight_decay", pre.weight_decay, "AdamW decoupled weight decay");
  pre_b.add(pre_cmd, "--eps", "/optim/eps", pre.eps, "AdamW epsilon");
  pre_b.add(pre_cmd, "--batch-size", "/optim/batch_size", pre.batch_size, "Effective batch size");
  pre_b.add(pre_cmd, "--accum-steps", "/optim/accum_steps", pre.accum_steps, "Micro-batches per optimizer step");
  pre_b.add(pre_cmd, "--epochs", "/optim/epochs", pre.epochs, "Training epochs");
  pre_b.add(pre_cmd, "--warmup-epochs", "/optim/warmup_epochs", pre.warmup_epochs, "Linear warmup epochs");
  pre_b.add(pre_cmd, "--max-steps", "/train/max_steps", pre.max_steps, "Stop after this many steps (0 = all)");
  pre_b.add(pre_cmd, "--record-plans", "/train/record_plans", pre.record_plans,
            "Write mask plans of the first this-many steps");
  pre_b.add(pre_cmd, "--flip", "/train/flip", pre.flip, "Random horizontal flips (true/false)");

  FinetuneArgs ft;
  ft.common.seed = seed;
  auto* ft_cmd = app.add_subcommand("finetune", "Linear probe or full finetuning on a labeled dataset");
  add_common_options(ft_cmd, ft_b, ft.common);
  add_model_options(ft_cmd, ft_b, ft.model);
  ft_b.add(ft_cmd, "--checkpoint", "/checkpoint", ft.checkpoint, "Pretrained checkpoint (omit for random init)");
  ft_b.add(ft_cmd, "--data", "/data_path", ft.data, "Labeled training dataset");
  ft_b.add(ft_cmd, "--test-data", "/test_data_path", ft.test_data, "Labeled evaluation dataset");
  ft_b.add(ft_cmd, "--test-fraction", "/test_fraction", ft.test_fraction,
           "Held-out tail of --data when --test-data is absent");
  ft_cmd->add_option("--out", ft.out, "Output directory (required)");
  ft_b.add(ft_cmd, "--mode", "/finetune/mode", ft.mode, "linear_probe or full")
      ->check(CLI::IsMember({"linear_probe", "full"}));
  ft_b.add(ft_cmd, "--epochs", "/finetune/epochs", ft.epochs, "Epochs");
  ft_b.add(ft_cmd, "--batch-size", "/finetune/batch_size", ft.batch_size, "Batch size");
  ft_b.add(ft_cmd, "--lr", "/finetune/lr", ft.lr, "Peak learning rate");
  ft_b.add(ft_cmd, "--weight-decay", "/finetune/weight_decay", ft.weight_decay, "Weight decay");

  auto add_image_cmd = [&](const char* name, const char* help, ImageArgs& args, Binder& b, std::size_t count) {
    args.common.seed = seed;
    args.count = count;
    auto* cmd = app.add_subcommand(name, help);
    add_common_options(cmd, b, args.common);
    add_model_options(cmd, b, args.model);
    b.add(cmd, "--checkpoint", "/checkpoint", args.checkpoint, "Checkpoint (omit for random init)");
    b.add(cmd, "--data", "/data_path", args.data, "Dataset file");
    cmd->add_option("--out", args.out, "Output directory (required)");
    b.add(cmd, "--index", "/index", args.index, "First image index");
    b.add(cmd, "--count", "/count", args.count, "Number of images");
    b.add(cmd, "--scale", "/scale", args.scale, "Upscale factor of written images");
    return cmd;
  };
  ImageArgs rec, attn, dec;
  auto* rec_cmd = add_image_cmd("reconstruct", "Write original | masked | reconstruction panels", rec, rec_b, 1);
  auto* attn_cmd = add_image_cmd("analyze-attn", "Mask-to-mask vs mask-to-visible attention of a self decoder",
                                 attn, attn_b, 64);
  auto* dec_cmd = add_image_cmd("decompose", "Per-block reconstruction decomposition of one image", dec, dec_b, 1);

  CommonArgs flops_common;
  flops_common.seed = seed;
  ModelArgs flops_model;
  flops_model.image_size = 224;
  flops_model.patch_size = 16;
  flops_model.enc_dim = 768;
  flops_model.enc_depth = 12;
  flops_model.enc_heads = 12;
  flops_model.dec_dim = 512;
  flops_model.dec_heads = 16;
  auto* flops_cmd = app.add_subcommand("flops", "Analytical decoder FLOPs against an MAE baseline (D=8)");
  add_common_options(flops_cmd, flops_b, flops_common);
  add_model_options(flops_cmd, flops_b, flops_model);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    const CLI::App* failed = &app;
    for (const CLI::App* sub : app.get_subcommands()) failed = sub;
    err << "\n" << failed->help();
    return kExitUsage;
  }

  auto with_manifest = [&](CommonArgs& common, Binder& b, const fs::path& fallback,
                           std::initializer_list<std::pair<const char*, const std::string*>> needed) {
    const json m = load_manifest(common.manifest, fallback);
    b.apply_manifest(m);
    for (const auto& [flag, value] : needed) {
      if (value->empty()) throw ConfigError(std::string(flag) + " is required");
    }
    apply_threads(common.threads);
  };

  return guarded(
      [&]() -> int {
        if (gen_cmd->parsed()) {
          with_manifest(gen.common, gen_b, {}, {{"--out", &gen.out}});
          return cmd_gen_data(gen, gen_b, out);
        }
        if (pre_cmd->parsed()) {
          with_manifest(pre.common, pre_b, {}, {{"--data", &pre.data}, {"--out", &pre.out}});
          return cmd_pretrain(pre, pre_b, out);
        }
        if (ft_cmd->parsed()) {
          with_manifest(ft.common, ft_b, parent_of(ft.checkpoint), {{"--data", &ft.data}, {"--out", &ft.out}});
          return cmd_finetune(ft, ft_b, out);
        }
        if (rec_cmd->parsed()) {
          with_manifest(rec.common, rec_b, parent_of(rec.checkpoint), {{"--data", &rec.data}, {"--out", &rec.out}});
          return cmd_reconstruct(rec, rec_b, out);
        }
        if (attn_cmd->parsed()) {
          with_manifest(attn.common, attn_b, parent_of(attn.checkpoint), {{"--data", &attn.data}, {"--out", &attn.out}});
          return cmd_analyze_attn(attn, attn_b, out);
        }
        if (dec_cmd->parsed()) {
          with_manifest(dec.common, dec_b, parent_of(dec.checkpoint), {{"--data", &dec.data}, {"--out", &dec.out}});
          return cmd_decompose(dec, dec_b, out);
        }
        with_manifest(flops_common, flops_b, {}, {});
        return cmd_flops(flops_common, flops_model, flops_b, out);
      },
      err);
}

}  // namespace cmae::cli
