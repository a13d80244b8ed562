// Command-line front end: init, train, denoise, eval.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "ierd/checkpoint.hpp"
#include "ierd/config.hpp"
#include "ierd/evaluate.hpp"
#include "ierd/train.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kIo = 3, kNumerical = 4 };

int fail(const char* category, const std::string& msg, int code) {
  std::string line = msg;
  for (char& c : line) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error: " << category << ": " << line << std::endl;
  return code;
}

/// Flags shared by every subcommand; each maps onto a RunConfig key.
struct CommonFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::optional<std::string> noise_agnostic;

  void add_key(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        flag, [this, key](const std::string& v) { overrides[key] = v; }, help);
  }

  void add_network(CLI::App& app) {
    add_key(app, "--modules", "network.modules", "Number of identity-mapping modules (M)");
    add_key(app, "--layers", "network.layers", "ReLU+conv pairs per module (L)");
    add_key(app, "--channels", "network.channels", "Feature channels (C)");
    add_key(app, "--image-channels", "network.image_channels", "1 for grayscale, 3 for RGB");
    add_key(app, "--dilations", "network.dilations", "Comma-separated dilation per layer");
  }

  void add_common(CLI::App& app) {
    app.add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    add_key(app, "--seed", "train.seed", "Root random seed");
    add_key(app, "--threads", "train.threads", "Worker threads (default 1)");
    add_key(app, "--out", "paths.out", "Output directory or file");
  }

  ierd::RunConfig resolve() const {
    ierd::RunConfig cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    cfg.merge_env();
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    if (noise_agnostic) {
      const auto colon = noise_agnostic->find(':');
      if (colon == std::string::npos) {
        throw ierd::ConfigError("--noise-agnostic: expected lo:hi, got '" + *noise_agnostic + "'");
      }
      cfg.set("noise.mode", "agnostic");
      cfg.set("noise.sigma_min", noise_agnostic->substr(0, colon));
      cfg.set("noise.sigma_max", noise_agnostic->substr(colon + 1));
    }
    cfg.finalize();
    return cfg;
  }
};

void write_resolved(const ierd::RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.ini");
  out << cfg.to_text();
  if (!out) throw ierd::IoError((dir / "config.ini").string() + ": write failed");
}

ierd::Checkpoint require_checkpoint(const std::string& path) {
  if (path.empty()) throw ierd::ConfigError("--checkpoint: a checkpoint file is required");
  return ierd::load_checkpoint(path);
}

int cmd_init(const ierd::RunConfig& cfg, const std::string& mode) {
  if (cfg.out.empty()) throw ierd::ConfigError("--out: output checkpoint path is required");
  ierd::Checkpoint ckpt;
  if (mode == "he") {
    ckpt.params = ierd::init_params(cfg.network, cfg.train.seed);
  } else if (mode == "zero") {
    ckpt.params = ierd::ParamStore<float>(cfg.network);
  } else if (mode == "identity") {
    ckpt.params = ierd::identity_network<float>(cfg.network);
  } else {
    throw ierd::ConfigError("--mode: expected he, zero or identity, got '" + mode + "'");
  }
  ckpt.seed = cfg.train.seed;
  const fs::path out(cfg.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ierd::save_checkpoint(ckpt, out);
  std::cout << "wrote " << out.string() << " (" << ckpt.params.scalar_count() << " parameters)\n";
  return kOk;
}

int cmd_train(const ierd::RunConfig& cfg, const std::string& resume_path) {
  if (cfg.dataset.empty()) throw ierd::ConfigError("--dataset: training dataset directory is required");
  if (!fs::exists(cfg.dataset)) {
    throw ierd::ConfigError("--dataset: '" + cfg.dataset + "' does not exist");
  }
  if (cfg.out.empty()) throw ierd::ConfigError("--out: output directory is required");
  const ierd::Dataset data = ierd::load_dataset(cfg.dataset);
  write_resolved(cfg, cfg.out);

  std::optional<ierd::Checkpoint> resume;
  if (!resume_path.empty()) resume = ierd::load_checkpoint(resume_path);
  const std::uint64_t report_every = std::max<std::uint64_t>(1, cfg.train.total_steps / 20);
  const auto ckpt = ierd::train_loop(cfg.train, cfg.network, data, cfg.out, resume,
                                     [&](std::uint64_t step, const ierd::StepResult& r) {
                                       if ((step + 1) % report_every == 0) {
                                         std::cout << "step " << step + 1 << "  loss " << r.loss
                                                   << "  lr " << r.lr << std::endl;
                                       }
                                     });
  std::cout << "trained " << ckpt.step << " steps; checkpoint "
            << ierd::TrainOutputs{cfg.out}.latest().string() << "\n";
  return kOk;
}

int cmd_denoise(const ierd::RunConfig& cfg, const std::string& input, bool ensemble) {
  const auto ckpt = require_checkpoint(cfg.checkpoint);
  if (input.empty()) throw ierd::ConfigError("--input: image file or directory is required");
  if (cfg.out.empty()) throw ierd::ConfigError("--out: output path is required");

  std::vector<std::pair<fs::path, fs::path>> jobs;
  const fs::path in(input), out(cfg.out);
  if (fs::is_directory(in)) {
    fs::create_directories(out);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_regular_file() && ierd::is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) jobs.emplace_back(f, out / f.filename());
  } else if (fs::is_regular_file(in)) {
    fs::path target = fs::is_directory(out) ? out / in.filename() : out;
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    jobs.emplace_back(in, target);
  } else {
    throw ierd::ConfigError("--input: '" + input + "' does not exist");
  }

  std::size_t ok = 0;
  for (const auto& [src, dst] : jobs) {
    try {
      const auto img = ierd::load_image(src);
      const auto result = ensemble ? ierd::self_ensemble(img, ckpt.params)
                                   : ierd::denoise_image(img, ckpt.params);
      ierd::save_image(result, dst);
      ++ok;
    } catch (const std::exception& e) {
      std::cerr << "warning: " << src.string() << ": " << e.what() << "\n";
    }
  }
  std::cout << "denoised " << ok << " of " << jobs.size() << " images"
            << (ensemble ? " (self-ensemble)" : "") << "\n";
  if (ok != jobs.size()) {
    return fail("io", std::to_string(jobs.size() - ok) + " image(s) failed", kIo);
  }
  return kOk;
}

int cmd_eval(const ierd::RunConfig& cfg, bool ensemble) {
  const auto ckpt = require_checkpoint(cfg.checkpoint);
  if (cfg.dataset.empty()) throw ierd::ConfigError("--dataset: clean image directory is required");
  if (!fs::exists(cfg.dataset)) {
    throw ierd::ConfigError("--dataset: '" + cfg.dataset + "' does not exist");
  }
  const auto data = ierd::load_dataset(cfg.dataset);
  auto report = ierd::evaluate(data, ckpt.params, cfg.train.noise.sigma, cfg.train.seed, ensemble);
  report.checkpoint = cfg.checkpoint;
  report.write_table(std::cout);
  if (!cfg.out.empty()) {
    write_resolved(cfg, cfg.out);
    std::ofstream csv(fs::path(cfg.out) / "report.csv");
    report.write_csv(csv);
    std::ofstream table(fs::path(cfg.out) / "report.txt");
    report.write_table(table);
    if (!csv || !table) throw ierd::IoError(cfg.out + ": cannot write report");
  } else {
    report.write_csv(std::cout);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identity-enhanced residual image denoising"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string mode = "he", resume, input;
  bool ensemble = false;

  auto* init = app.add_subcommand("init", "Write an untrained checkpoint");
  flags.add_common(*init);
  flags.add_network(*init);
  init->add_option("--mode", mode, "he | zero | identity")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train on noisy/clean patches cropped from a dataset");
  flags.add_common(*train);
  flags.add_network(*train);
  flags.add_key(*train, "--dataset", "paths.dataset", "Directory (or manifest) of clean images");
  flags.add_key(*train, "--sigma", "noise.sigma", "Noise level on the 0-255 scale");
  train->add_option("--noise-agnostic", flags.noise_agnostic, "Train over a sigma range lo:hi");
  flags.add_key(*train, "--steps", "train.steps", "Total optimizer steps");
  flags.add_key(*train, "--batch", "train.batch", "Patches per batch");
  flags.add_key(*train, "--patch", "train.patch", "Patch size in pixels");
  flags.add_key(*train, "--lr", "train.lr", "Initial learning rate");
  flags.add_key(*train, "--checkpoint-every", "train.checkpoint_every", "Steps between checkpoints");
  train->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);

  auto* denoise = app.add_subcommand("denoise", "Denoise an image or a directory of images");
  flags.add_common(*denoise);
  flags.add_key(*denoise, "--checkpoint", "paths.checkpoint", "Trained checkpoint");
  denoise->add_option("--input", input, "Image file or directory");
  denoise->add_flag("--ensemble", ensemble, "Average over the 8 flips/rotations");

  auto* eval = app.add_subcommand("eval", "Add noise to clean images, denoise and report PSNR/SSIM");
  flags.add_common(*eval);
  flags.add_key(*eval, "--checkpoint", "paths.checkpoint", "Trained checkpoint");
  flags.add_key(*eval, "--dataset", "paths.dataset", "Directory of clean images");
  flags.add_key(*eval, "--sigma", "noise.sigma", "Noise level on the 0-255 scale");
  eval->add_flag("--ensemble", ensemble, "Average over the 8 flips/rotations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kConfig);
  }

  try {
    const ierd::RunConfig cfg = flags.resolve();
    ierd::set_num_threads(cfg.threads);
    if (*init) return cmd_init(cfg, mode);
    if (*train) return cmd_train(cfg, resume);
    if (*denoise) return cmd_denoise(cfg, input, ensemble);
    if (*eval) return cmd_eval(cfg, ensemble);
  } catch (const ierd::ConfigError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const ierd::IoError& e) {
    return fail("io", e.what(), kIo);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), kIo);
  } catch (const ierd::NumericalError& e) {
    return fail("numerical", e.what(), kNumerical);
  } catch (const std::invalid_argument& e) {
    return fail("config", e.what(), kConfig);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kInternal);
  }
  return kInternal;
}
