#include "f3net/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "f3net/case_layout.hpp"
#include "f3net/checkpoint.hpp"
#include "f3net/config.hpp"
#include "f3net/error.hpp"
#include "f3net/nifti.hpp"
#include "f3net/pathoseg.hpp"
#include "f3net/phantom.hpp"
#include "f3net/report.hpp"

namespace fs = std::filesystem;

namespace f3net {

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct GlobalOptions {
  std::string config_path;
  std::string preset = "paper";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::vector<std::string> sets;
  Overrides flags;  // subcommand flags mapped onto config keys
};

/// Adds `--name VALUE` that overrides config key `key`.
void config_flag(CLI::App* sub, GlobalOptions& g, const std::string& name, const std::string& key,
                 const std::string& help) {
  sub->add_option_function<std::string>(
      name, [&g, key](const std::string& v) { g.flags.emplace_back(key, v); }, help + " [" + key + "]");
}

void config_switch(CLI::App* sub, GlobalOptions& g, const std::string& name, const std::string& key,
                   const std::string& help) {
  sub->add_flag_callback(name, [&g, key] { g.flags.emplace_back(key, "true"); }, help + " [" + key + "]");
}

/// preset < config file < --seed/--deterministic < --set and subcommand flags.
RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg = RunConfig::preset(g.preset);
  if (!g.config_path.empty()) apply_config_file(cfg, g.config_path);
  if (g.seed) cfg.train.seed = *g.seed;
  if (g.deterministic) cfg.train.deterministic = true;
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidConfig("--set expects section.key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : g.flags) apply_setting(cfg, k, v);
  if (!cfg.predict_patch_set) cfg.predict.patch_shape = cfg.train.patch_shape;
  cfg.train.validate();
  cfg.predict.validate();
  return cfg;
}

struct LoadedModel {
  F3NetModel model;
  std::optional<Shape3> trained_patch;
};

LoadedModel load_model(const fs::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  LoadedModel m{model_from_checkpoint(ckpt), std::nullopt};
  if (ckpt.meta.contains("patch_shape")) {
    const auto& p = ckpt.meta.at("patch_shape");
    if (p.is_array() && p.size() == 3)
      m.trained_patch = Shape3{p[0].get<int>(), p[1].get<int>(), p[2].get<int>()};
  }
  return m;
}

PredictConfig predict_config_for(const RunConfig& cfg, const LoadedModel& m) {
  PredictConfig p = cfg.predict;
  if (!cfg.predict_patch_set && m.trained_patch) p.patch_shape = *m.trained_patch;
  return p;
}

std::string mask_name(const std::string& case_id) { return case_id + "_mask.nii.gz"; }

ModalityPresence parse_modality_list(const std::string& text) {
  ModalityPresence p;
  std::string cur;
  for (char ch : text + ",") {
    if (ch != ',') {
      cur += ch;
      continue;
    }
    if (cur.empty()) continue;
    if (cur == "all") {
      p = ModalityPresence::all();
    } else {
      const auto m = parse_modality(cur);
      if (!m) throw InvalidConfig("unknown modality '" + cur + "' (t1, t1gd, t2, flair, dwi, adc)");
      p[*m] = true;
    }
    cur.clear();
  }
  if (p.count() == 0) throw InvalidConfig("no modality selected");
  return p;
}

std::string modality_list(const ModalityPresence& p) {
  std::string s;
  for (Modality m : kAllModalities)
    if (p[m]) s += (s.empty() ? "" : ",") + std::string(modality_name(m));
  return s.empty() ? "none" : s;
}

std::string dataset_name(const std::string& explicit_name, const fs::path& dir) {
  if (!explicit_name.empty()) return explicit_name;
  const fs::path p = fs::absolute(dir).lexically_normal();
  const std::string name = p.filename().string();
  return name.empty() ? p.parent_path().filename().string() : name;
}

void write_reports(const fs::path& out_dir, const std::string& dataset,
                   const EvaluationReport& report, std::ostream& out) {
  const DatasetSummary summary{dataset, report.summary};
  write_text(out_dir / "metrics.csv", render_case_csv(dataset, report));
  write_text(out_dir / "summary.csv", render_summary_csv({&summary, 1}));
  const std::string table = render_markdown({&summary, 1});
  write_text(out_dir / "table.md", table);
  out << table;
  out << "wrote " << (out_dir / "metrics.csv").string() << ", summary.csv, table.md\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"F3-Net multimodal lesion segmentation", "f3net"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Sectioned key-value config file")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "Base settings before the config file")
      ->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--seed", g.seed, "Random seed [train.seed]");
  app.add_flag("--deterministic", g.deterministic, "Bit-reproducible run [train.deterministic]");
  app.add_option("--set", g.sets, "Override any setting: section.key=value (repeatable)");

  // pathoseg
  std::vector<std::string> ps_main;
  std::string ps_wmh, ps_ref, ps_whole_out, ps_out;
  auto* pathoseg = app.add_subcommand("pathoseg", "Merge pathology masks into whole-pathology and Pathoseg masks");
  pathoseg->add_option("--main", ps_main, "Main pathology mask (repeatable, merged in order)")
      ->required()
      ->check(CLI::ExistingFile);
  pathoseg->add_option("--wmh", ps_wmh, "Binary white matter hyperintensity mask")->check(CLI::ExistingFile);
  pathoseg->add_option("--reference", ps_ref, "Volume whose grid the outputs use (default: first --main)")
      ->check(CLI::ExistingFile);
  pathoseg->add_option("--whole-out", ps_whole_out, "Whole-pathology mask output")->required();
  pathoseg->add_option("--out", ps_out, "Binary Pathoseg mask output")->required();

  // train
  std::string tr_data, tr_out = ".", tr_run = "run";
  bool tr_resume = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
  train_cmd->add_option("--data", tr_data, "Dataset root or case directory")->required();
  train_cmd->add_option("--out", tr_out, "Output root; writes checkpoints/{run_id}/")->capture_default_str();
  train_cmd->add_option("--run-id", tr_run, "Run name")->capture_default_str();
  train_cmd->add_flag("--resume", tr_resume, "Continue from latest.ckpt");
  config_flag(train_cmd, g, "--epochs", "train.max_epochs", "Epochs");
  config_flag(train_cmd, g, "--steps", "train.steps_per_epoch", "Steps per epoch");
  config_flag(train_cmd, g, "--batch-size", "train.batch_size", "Batch size");
  config_flag(train_cmd, g, "--lr", "train.initial_lr", "Initial learning rate");
  config_flag(train_cmd, g, "--momentum", "train.momentum", "SGD momentum");
  config_flag(train_cmd, g, "--weight-decay", "train.weight_decay", "Weight decay");
  config_flag(train_cmd, g, "--patch", "train.patch_shape", "Patch shape x,y,z");
  config_flag(train_cmd, g, "--drop-prob", "train.modality_drop_prob", "Modality drop probability");
  config_flag(train_cmd, g, "--mask-scope", "network.mask_scope", "all_stages or deepest_only");
  config_switch(train_cmd, g, "--nesterov", "train.nesterov", "Nesterov momentum");

  // predict
  std::string pr_model, pr_case, pr_out = ".";
  auto* predict_cmd = app.add_subcommand("predict", "Predict probability and mask volumes");
  predict_cmd->add_option("--model", pr_model, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--case", pr_case, "Case directory or dataset root")->required();
  predict_cmd->add_option("--out", pr_out, "Output directory")->capture_default_str();
  auto predict_flags = [&](CLI::App* sub) {
    config_flag(sub, g, "--patch", "predict.patch_shape", "Window shape x,y,z");
    config_flag(sub, g, "--overlap", "predict.window_overlap", "Window overlap fraction");
    config_flag(sub, g, "--threshold", "predict.threshold", "Foreground threshold");
    config_flag(sub, g, "--blend", "predict.blend", "gaussian or uniform");
    config_switch(sub, g, "--mirror", "predict.mirror", "Average the eight axis flips");
  };
  predict_flags(predict_cmd);

  // evaluate
  std::string ev_model, ev_data, ev_pred, ev_labels, ev_out = ".", ev_name;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a model or saved masks against labels");
  auto* ev_model_opt = evaluate_cmd->add_option("--model", ev_model, "Checkpoint file")->check(CLI::ExistingFile);
  auto* ev_data_opt = evaluate_cmd->add_option("--data", ev_data, "Labelled dataset root (with --model)");
  auto* ev_pred_opt =
      evaluate_cmd->add_option("--predictions", ev_pred, "Directory of {case_id}_mask.nii.gz files");
  auto* ev_labels_opt = evaluate_cmd->add_option("--labels", ev_labels, "Dataset root holding the labels");
  evaluate_cmd->add_option("--out", ev_out, "Report directory")->capture_default_str();
  evaluate_cmd->add_option("--dataset", ev_name, "Dataset name in the reports (default: directory name)");
  ev_model_opt->needs(ev_data_opt);
  ev_data_opt->needs(ev_model_opt);
  ev_pred_opt->needs(ev_labels_opt);
  ev_labels_opt->needs(ev_pred_opt);
  ev_model_opt->excludes(ev_pred_opt);
  predict_flags(evaluate_cmd);

  // make-phantom
  std::string mp_out, mp_shape = "32", mp_modalities = "all";
  int mp_lesions = 1, mp_count = 1;
  double mp_noise = 0.05, mp_rmin = 2.0, mp_rmax = 5.0;
  auto* phantom_cmd = app.add_subcommand("make-phantom", "Write synthetic phantom cases");
  phantom_cmd->add_option("--out", mp_out, "Dataset root")->required();
  phantom_cmd->add_option("--lesions", mp_lesions, "Random spherical lesions per case")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  phantom_cmd->add_option("--shape", mp_shape, "Grid shape: n or x,y,z")->capture_default_str();
  phantom_cmd->add_option("--count", mp_count, "Number of cases")->capture_default_str()->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--modalities", mp_modalities, "Comma list of modalities to emit")->capture_default_str();
  phantom_cmd->add_option("--noise", mp_noise, "Relative noise level")->capture_default_str();
  phantom_cmd->add_option("--min-radius", mp_rmin, "Smallest lesion radius (voxels)")->capture_default_str();
  phantom_cmd->add_option("--max-radius", mp_rmax, "Largest lesion radius (voxels)")->capture_default_str();

  // inspect
  std::string in_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print case geometry and modality presence");
  inspect_cmd->add_option("path", in_path, "Case directory or dataset root")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig cfg = resolve_config(g);

    if (*pathoseg) {
      const Geometry ref = nifti::read_geometry(ps_ref.empty() ? ps_main.front() : ps_ref);
      std::vector<SegMask> mains;
      for (const auto& p : ps_main) {
        SegMask m = nifti::read_mask(p);
        mains.push_back(m.geometry == ref ? std::move(m) : resample_mask(m, ref));
      }
      SegMask whole = merge_distinct_masks(mains);
      if (!ps_wmh.empty()) {
        SegMask w = nifti::read_mask(ps_wmh);
        whole = merge_whole(whole, w.geometry == ref ? w : resample_mask(w, ref));
      }
      const PathosegMask seg = binarize(whole);
      nifti::write_mask(ps_whole_out, whole);
      nifti::write_mask(ps_out, seg);
      out << "whole pathology: max label " << whole.max_label() << ", "
          << seg.foreground_count() << " foreground voxels\n";
      return kExitOk;
    }

    if (*train_cmd) {
      const auto dataset = load_dataset(tr_data);
      out << "loaded " << dataset.size() << " case(s) from " << tr_data << "\n";
      F3NetModel model(cfg.train.network, cfg.train.seed);
      TrainOptions opts;
      opts.output_root = fs::path(tr_out);
      opts.run_id = tr_run;
      opts.resume = tr_resume;
      opts.on_epoch = [&out](const EpochRecord& r) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %d lr %.6g loss %.6f train_dsc %.4f\n", r.epoch, r.lr,
                      r.mean_loss, r.train_dsc);
        out << line << std::flush;
      };
      const TrainResult result = train(model, dataset, cfg.train, opts);
      const fs::path run_dir = run_directory(tr_out, tr_run);
      if (result.history.empty()) {
        fs::create_directories(run_dir);
        write_history_csv(run_dir / "history.csv", result.history);
        write_checkpoint(run_dir / "latest.ckpt", make_checkpoint(model));
      }
      out << "best train_dsc " << result.best_dsc << "; checkpoints in " << run_dir.string() << "\n";
      return kExitOk;
    }

    if (*predict_cmd) {
      const LoadedModel lm = load_model(pr_model);
      const PredictConfig pcfg = predict_config_for(cfg, lm);
      fs::create_directories(pr_out);
      for (const auto& dir : list_case_dirs(pr_case)) {
        const MultiModalCase c = load_case(dir);
        const Prediction p = predict_case(lm.model, c, pcfg);
        nifti::write_volume(fs::path(pr_out) / (c.case_id + "_prob.nii.gz"), p.probability);
        nifti::write_mask(fs::path(pr_out) / mask_name(c.case_id), p.mask);
        out << c.case_id << ": presence " << to_string(c.presence) << ", " << p.mask.foreground_count()
            << " foreground voxels\n";
      }
      return kExitOk;
    }

    if (*evaluate_cmd) {
      if (ev_model.empty() && ev_pred.empty())
        throw UsageError("evaluate needs --model with --data, or --predictions with --labels");
      if (!ev_model.empty()) {
        const LoadedModel lm = load_model(ev_model);
        const auto cases = load_dataset(ev_data);
        const EvaluationReport report = evaluate_dataset(lm.model, cases, predict_config_for(cfg, lm));
        write_reports(ev_out, dataset_name(ev_name, ev_data), report, out);
        return kExitOk;
      }
      std::vector<PathosegMask> preds, labels;
      std::vector<std::string> ids;
      std::map<std::string, CaseFiles> label_cases;
      for (const auto& dir : list_case_dirs(ev_labels)) {
        CaseFiles f = scan_case_dir(dir);
        label_cases.emplace(f.case_id, std::move(f));
      }
      std::vector<fs::path> mask_files;
      for (const auto& e : fs::recursive_directory_iterator(ev_pred))
        if (e.is_regular_file() && e.path().filename().string().ends_with("_mask.nii.gz"))
          mask_files.push_back(e.path());
      std::sort(mask_files.begin(), mask_files.end());
      if (mask_files.empty()) throw LayoutError("no *_mask.nii.gz files under '" + ev_pred + "'");
      for (const auto& mf : mask_files) {
        const std::string name = mf.filename().string();
        const std::string id = name.substr(0, name.size() - std::string("_mask.nii.gz").size());
        auto it = label_cases.find(id);
        if (it == label_cases.end()) throw MissingLabel("no labelled case '" + id + "' under " + ev_labels);
        const auto label = load_label(it->second);
        if (!label) throw MissingLabel("case '" + id + "' has no seg or wmh file");
        PathosegMask pred = binarize(nifti::read_mask(mf));
        if (pred.geometry.shape != label->geometry.shape)
          throw GeometryMismatch("prediction and label of '" + id + "' differ in shape");
        preds.push_back(std::move(pred));
        labels.push_back(binarize(*label));
        ids.push_back(id);
      }
      write_reports(ev_out, dataset_name(ev_name, ev_labels), evaluate_masks(preds, labels, ids), out);
      return kExitOk;
    }

    if (*phantom_cmd) {
      PhantomSpec spec;
      spec.shape = parse_shape(mp_shape);
      spec.random_lesions = mp_lesions;
      spec.modalities = parse_modality_list(mp_modalities);
      spec.noise = mp_noise;
      spec.min_radius = mp_rmin;
      spec.max_radius = mp_rmax;
      for (int i = 0; i < mp_count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "case_%04d", i);
        spec.case_id = id;
        spec.seed = cfg.train.seed + static_cast<std::uint64_t>(i);
        const fs::path dir = make_phantom(spec, mp_out);
        out << "wrote " << dir.string() << "\n";
      }
      return kExitOk;
    }

    if (*inspect_cmd) {
      for (const auto& dir : list_case_dirs(in_path)) {
        const MultiModalCase c = load_raw_case(dir);
        const Spacing3& sp = c.geometry().spacing;
        out << "case_id    " << c.case_id << "\n"
            << "shape      " << to_string(c.geometry().shape) << "\n"
            << "spacing    (" << sp[0] << "," << sp[1] << "," << sp[2] << ")\n"
            << "presence   " << to_string(c.presence) << "\n"
            << "modalities " << modality_list(c.presence) << "\n";
        if (c.label)
          out << "label      max " << c.label->max_label() << ", " << c.label->foreground_count()
              << " foreground voxels\n";
        else
          out << "label      none\n";
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error [" << e.kind() << "]: " << e.what() << "\n";
    switch (e.category()) {
      case ErrorCategory::Usage: return kExitUsage;
      case ErrorCategory::Data: return kExitData;
      case ErrorCategory::Numerical: return kExitNumerical;
    }
  } catch (const fs::filesystem_error& e) {
    err << "error [IOError]: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error [Internal]: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace f3net
