/* Copyright 2026 The stnface Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// stnface: train, evaluate, gradient-check and inspect the face pipeline.
//
// Exit codes: 0 ok, 1 check failure, 2 usage or config error, 3 checkpoint
// does not match the model.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "stnface/checkpoint.hpp"
#include "stnface/config.hpp"
#include "stnface/errors.hpp"
#include "stnface/eval.hpp"
#include "stnface/gradcheck.hpp"
#include "stnface/image_io.hpp"
#include "stnface/pipeline.hpp"
#include "stnface/stn.hpp"

namespace fs = std::filesystem;
using namespace stnface;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kMismatch = 3;

// Advisory lock on <dir>/.lock, held for the lifetime of a command that
// writes into the directory. The kernel drops it if the process dies.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw InputError("cannot create lock " + path_.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw InputError("output directory " + dir.string() + " is in use by another run");
    }
  }
  ~DirLock() { ::close(fd_); }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string checkpoint_name(std::uint64_t iter) {
  std::ostringstream os;
  os << "ckpt_" << std::setw(8) << std::setfill('0') << iter << ".stnckpt";
  return os.str();
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  static const std::regex re(R"(ckpt_(\d+)\.stnckpt)");
  std::optional<fs::path> best;
  std::uint64_t best_iter = 0;
  if (!fs::is_directory(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (!std::regex_match(name, m, re)) continue;
    const std::uint64_t it = std::stoull(m[1].str());
    if (!best || it > best_iter) {
      best = e.path();
      best_iter = it;
    }
  }
  return best;
}

// Drops metrics rows at or beyond `iter` so a resumed run appends exactly
// the rows an uninterrupted run would have written.
void truncate_metrics(const fs::path& path, std::uint64_t iter) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      keep.push_back(line);
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoull(line.substr(0, comma)) < iter) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const Common& c, const std::optional<fs::path>& fallback = {}) {
  RunConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
  } else if (fallback && fs::exists(*fallback)) {
    cfg = load_config(*fallback);
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  validate_config(cfg);
  return cfg;
}

int cmd_train(const Common& c, bool resume, std::optional<std::uint64_t> until) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  DirLock lock(out);
  {
    std::ofstream echo(out / "config.txt");
    echo_config(echo, cfg);
  }

  const Split split = make_run_split(cfg);
  auto model = build_model(cfg);
  Trainer trainer(*model, cfg.schedule(), cfg.solver, make_sources(cfg, split),
                  cfg.sampling_seed());

  const fs::path metrics_path = out / "metrics.csv";
  if (resume) {
    const auto latest = latest_checkpoint(out);
    if (!latest) throw InputError("--resume: no checkpoint in " + out.string());
    restore_checkpoint(read_checkpoint(*latest), *model, trainer.state());
    truncate_metrics(metrics_path, trainer.state().iter);
    std::cout << "resumed from " << latest->string() << " at iter " << trainer.state().iter << "\n";
  }
  std::ofstream metrics(metrics_path, resume && fs::exists(metrics_path) ? std::ios::app
                                                                          : std::ios::trunc);
  if (!resume || fs::file_size(metrics_path) == 0) write_metrics_header(metrics);

  const std::uint64_t stop = until.value_or(cfg.solver.max_iter);
  trainer.run(stop, &metrics, [&](std::uint64_t iter) {
    metrics.flush();
    write_checkpoint(out / checkpoint_name(iter), capture_checkpoint(*model, trainer.state()));
  });
  std::cout << "iter " << trainer.state().iter << " params " << std::hex << std::setw(16)
            << std::setfill('0') << parameter_hash(*model) << std::dec << "\n";
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& annotations) {
  if (checkpoint.empty()) throw InputError("eval: --checkpoint is required");
  const fs::path ckpt_path = checkpoint;
  if (!fs::exists(ckpt_path)) throw InputError("checkpoint not found: " + checkpoint);
  Common cc = c;
  if (cc.out.empty()) cc.out = (ckpt_path.parent_path() / "eval").string();
  const RunConfig cfg = resolve_config(cc, ckpt_path.parent_path() / "config.txt");

  auto model = build_model(cfg);
  OptimizerState opt;
  restore_checkpoint(read_checkpoint(ckpt_path), *model, opt);

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  DirLock lock(out);

  std::vector<ImageDetections> images;
  std::optional<VerificationReport> ver;
  std::optional<double> ms_per_face;
  std::vector<std::string> ids;
  if (!annotations.empty()) {
    const AnnotationSet set = load_annotations(annotations);
    images = detect_annotated(*model, set, fs::path(annotations).parent_path());
    for (const auto& a : set.images) ids.push_back(a.path);
  } else {
    const Split split = make_run_split(cfg);
    EvalSummary s = evaluate(*model, cfg, split);
    images = std::move(s.images);
    ver = s.verification;
    ms_per_face = s.ms_per_face;
    write_embeddings(out / "embeddings.emb", s.test_embeddings);
    for (std::size_t i = 0; i < images.size(); ++i) ids.push_back("tile" + std::to_string(i));
  }
  const DetectionReport det = detection_sweep(images, cfg.eval_iou);

  {
    std::ofstream f(out / "detections.txt");
    for (std::size_t i = 0; i < images.size(); ++i) write_detections(f, ids[i], images[i].dets);
  }
  {
    std::ofstream f(out / "sweep.csv");
    f << "threshold,recall,precision,f1\n" << std::setprecision(6);
    for (const auto& p : det.sweep) {
      f << p.threshold << ',' << p.recall << ',' << p.precision << ',' << p.f1 << '\n';
    }
  }
  std::vector<std::pair<std::string, double>> rows = {
      {"images", static_cast<double>(images.size())},
      {"gt_faces", det.total_gt},
      {"recall_at_best_f1", det.best_f1.recall},
      {"precision_at_best_f1", det.best_f1.precision},
      {"best_f1", det.best_f1.f1},
      {"best_f1_threshold", det.best_f1.threshold},
      {"max_recall", det.max_recall},
  };
  if (ver) {
    rows.push_back({"verify_threshold", ver->threshold});
    rows.push_back({"verify_calib_accuracy", ver->calib_accuracy});
    rows.push_back({"verify_test_accuracy", ver->test_accuracy});
    rows.push_back({"ms_per_face", *ms_per_face});
  }
  std::ofstream csv(out / "report.csv");
  std::ofstream txt(out / "report.txt");
  csv << "metric,value\n" << std::setprecision(6);
  txt << std::setprecision(6);
  for (const auto& [k, v] : rows) {
    csv << k << ',' << v << '\n';
    txt << std::left << std::setw(24) << k << v << '\n';
    std::cout << std::left << std::setw(24) << k << v << '\n';
  }
  return kOk;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed, double analytic_scale) {
  std::vector<std::string> ops;
  if (scope == "all") {
    ops = gradcheck_ops();
  } else {
    gradcheck_builder(scope);  // throws for unknown names
    ops = {scope};
  }
  GradcheckOptions opt;
  opt.analytic_scale = analytic_scale;
  bool ok = true;
  std::printf("%-20s %9s %7s %8s %12s  %s\n", "op", "instances", "probes", "skipped",
              "max_rel_err", "result");
  for (const auto& op : ops) {
    const GradcheckResult r = run_gradcheck(op, seed, opt);
    ok = ok && r.passed;
    std::printf("%-20s %9d %7ld %8ld %12.3e  %s%s\n", op.c_str(), r.instances, r.probes,
                r.skipped_probes, r.max_rel_error, r.passed ? "PASS" : "FAIL",
                r.passed ? "" : (" at " + r.worst).c_str());
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_transform(const std::string& input, const std::string& output,
                  const std::vector<float>& theta, std::optional<double> alpha, double tx,
                  double ty) {
  if (output.empty()) throw InputError("transform: --out is required");
  AffineTheta th;
  if (!theta.empty()) {
    if (theta.size() != 6) throw InputError("--theta takes exactly 6 values");
    std::copy(theta.begin(), theta.end(), th.params.begin());
  } else {
    th = AffineTheta::from_rotation(alpha.value_or(0.0), tx, ty);
  }
  const Tensor img = read_pnm(input);
  const Size2 size{img.dim(1), img.dim(2)};
  const AffineTheta thetas[] = {th};
  const SampleGrid grid = affine_grid(thetas, size, size);
  write_ppm(output, bilinear_sample_forward(img.reshaped({1, img.dim(0), size.h, size.w}), grid));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint face detection and recognition with spatial transformers"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Config file (key = value)");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Root seed");
  };

  auto* train = app.add_subcommand("train", "Run the staged training schedule");
  add_common(train);
  bool resume = false;
  std::optional<std::uint64_t> until;
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in the output dir");
  train->add_option("--until", until, "Stop after this many iterations (default max_iter)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval);
  std::string checkpoint, annotations;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--annotations", annotations,
                   "Annotation file for detection on real images (default: synthetic sets)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of backward kernels");
  std::string scope = "all";
  std::uint64_t grad_seed = 1;
  double analytic_scale = 1.0;
  grad->add_option("scope", scope, "Op name or 'all'");
  grad->add_option("--seed", grad_seed, "Seed for the random instances");
  grad->add_option("--analytic-scale", analytic_scale,
                   "Scale the analytic gradients (negative control)");
  grad->add_flag_callback(
      "--list",
      [] {
        for (const auto& op : gradcheck_ops()) std::cout << op << "\n";
        std::exit(0);
      },
      "List registered ops");

  auto* transform = app.add_subcommand("transform", "Warp an image with an affine theta");
  std::string input, output;
  std::vector<float> theta;
  std::optional<double> alpha;
  double tx = 0, ty = 0;
  transform->add_option("image", input, "Input PPM/PGM")->required();
  transform->add_option("--out", output, "Output PPM")->required();
  auto* theta_opt = transform->add_option("--theta", theta, "t11 t12 t13 t21 t22 t23")
                        ->expected(6)
                        ->delimiter(',');
  transform->add_option("--alpha", alpha, "Rotation in radians")->excludes(theta_opt);
  transform->add_option("--tx", tx, "Normalized x translation")->excludes(theta_opt);
  transform->add_option("--ty", ty, "Normalized y translation")->excludes(theta_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(common, resume, until);
    if (*eval) return cmd_eval(common, checkpoint, annotations);
    if (*grad) return cmd_gradcheck(scope, grad_seed, analytic_scale);
    if (*transform) return cmd_transform(input, output, theta, alpha, tx, ty);
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << "\n";
    return kUsage;
  } catch (const StateMismatch& e) {
    std::cerr << "checkpoint mismatch: " << e.what() << "\n";
    return kMismatch;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error (line " << e.line() << "): " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}
