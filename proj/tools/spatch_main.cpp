// Copyright 2026 The spatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// spatch: host-side driver for building, analysing, patching and running
// MiniRV firmware in the simulator.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "spatch/error.hpp"
#include "spatch/measure.hpp"
#include "spatch/pipeline.hpp"

using namespace spatch;

namespace {

// Exit 2 with a reason on stderr.
struct Rejected {
  std::string reason;
  std::string detail;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  const auto s = read_text(path);
  return {s.begin(), s.end()};
}

std::filesystem::path sidecar_path(std::filesystem::path image) { return image.replace_extension(".sidecar"); }

struct Loaded {
  FirmwareImage image;
  DebugSidecar sidecar;
};

Loaded load_firmware(const std::string& path) {
  return {FirmwareImage::load(path), DebugSidecar::load(sidecar_path(path))};
}

// The sidecar records the frame layout under its profile name.
const ArchProfile& image_profile(const std::string& image, const std::string& fallback) {
  const auto sc = sidecar_path(image);
  if (std::filesystem::exists(sc)) {
    const auto d = DebugSidecar::load(sc);
    if (!d.frames.empty()) return profile_by_name(d.frames.begin()->first);
  }
  return profile_by_name(fallback);
}

Addr parse_addr(const std::string& s) { return static_cast<Addr>(std::stoul(s, nullptr, 0)); }

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

TriggerKind trigger_arg(const std::string& s) {
  auto t = parse_trigger(s);
  if (!t) throw std::runtime_error("unknown trigger " + s + " (hw|sw|hook)");
  return *t;
}

TextPlacement placement_arg(const std::string& s) {
  if (s == "flash") return TextPlacement::Flash;
  if (s == "sram") return TextPlacement::Sram;
  throw std::runtime_error("unknown text placement " + s + " (flash|sram)");
}

std::vector<const ArchProfile*> profiles_arg(const std::string& s) {
  if (s == "all") return {&profile_soft16(), &profile_hard16()};
  return {&profile_by_name(s)};
}

// Compile context file: the mapping table plus return targets and symbols.
std::string context_to_text(const CompileContext& ctx) {
  std::ostringstream os;
  os << ctx.map.to_text();
  os << "TARGET update " << hex(ctx.targets.update_addr) << "\n";
  if (ctx.targets.pass) os << "TARGET pass " << hex(*ctx.targets.pass) << "\n";
  if (ctx.targets.skip) os << "TARGET skip " << hex(*ctx.targets.skip) << "\n";
  if (ctx.targets.caller) os << "TARGET caller " << hex(*ctx.targets.caller) << "\n";
  for (const auto& [name, a] : ctx.symbols) os << "SYM " << name << " " << hex(a) << "\n";
  return os.str();
}

CompileContext context_from_text(const std::string& text) {
  CompileContext ctx;
  std::istringstream is(text);
  std::ostringstream table;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key, a, b;
    ls >> key;
    if (key == "TARGET" && ls >> a >> b) {
      const Addr v = parse_addr(b);
      if (a == "update") ctx.targets.update_addr = v;
      if (a == "pass") ctx.targets.pass = v;
      if (a == "skip") ctx.targets.skip = v;
      if (a == "caller") ctx.targets.caller = v;
    } else if (key == "SYM" && ls >> a >> b) {
      ctx.symbols[a] = parse_addr(b);
    } else {
      table << line << "\n";
    }
  }
  ctx.map = MappingTable::parse(table.str());
  return ctx;
}

void print_failure(const Failure& f) {
  throw Rejected{f.reason, std::string(stage_name(f.stage)) + ": " + f.detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatch: hot patching for MiniRV firmware"};
  app.require_subcommand(1);

  // build
  std::vector<std::string> build_srcs;
  std::string build_out, profile_name = "soft16", text = "flash";
  std::uint32_t build_wdt = 0;
  auto* build = app.add_subcommand("build", "Assemble and link sources (concatenated) into an image and sidecar");
  build->add_option("sources", build_srcs, "Assembly files")->required()->check(CLI::ExistingFile);
  build->add_option("-o,--out", build_out, "Output image (.spfw); sidecar goes next to it")->required();
  build->add_option("--profile", profile_name, "soft16 | hard16");
  build->add_option("--text", text, "flash | sram");
  build->add_option("--wdt", build_wdt, "Watchdog reload in cycles (0 = off)");

  // diff
  std::string old_img, new_img;
  auto* diff = app.add_subcommand("diff", "Function-level diff of two images");
  diff->add_option("old", old_img)->required()->check(CLI::ExistingFile);
  diff->add_option("new", new_img)->required()->check(CLI::ExistingFile);

  // analyze
  std::string vars_csv, trigger = "hw", function, map_out;
  auto* analyze = app.add_subcommand("analyze", "Choose the update point and build the variable map");
  analyze->add_option("old", old_img)->required()->check(CLI::ExistingFile);
  analyze->add_option("new", new_img)->required()->check(CLI::ExistingFile);
  analyze->add_option("--vars", vars_csv, "Comma-separated patch variables");
  analyze->add_option("--profile", profile_name, "Fallback when the image has no sidecar");
  analyze->add_option("--trigger", trigger, "hw | sw | hook");
  analyze->add_option("--function", function, "Changed function (default: lowest address)");
  analyze->add_option("-o,--out", map_out, "Write the mapping table here");

  // genpatch
  std::string ps_src, map_in, bin_out;
  auto* genpatch = app.add_subcommand("genpatch", "Compile PatchScript against a mapping table");
  genpatch->add_option("source", ps_src)->required()->check(CLI::ExistingFile);
  genpatch->add_option("--map", map_in)->required()->check(CLI::ExistingFile);
  genpatch->add_option("-o,--out", bin_out, "Patch binary (default: source with .bin)");

  // verify
  std::string bin_in;
  std::uint32_t wdt = 0, crit = 0;
  auto* verify_cmd = app.add_subcommand("verify", "Structural check and timing gate");
  verify_cmd->add_option("patch", bin_in)->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--wdt", wdt, "Watchdog period W")->required();
  verify_cmd->add_option("--crit", crit, "Critical-task time C")->required();
  verify_cmd->add_option("--profile", profile_name, "soft16 | hard16");

  // deploy
  std::string port, scenario_name, image_in, strategy = "pass";
  std::string update_str;
  auto* deploy = app.add_subcommand("deploy", "Install patches on a simulated device; frames go to --port");
  deploy->add_option("--port", port, "Stream receiving the raw request/reply frames")->required();
  deploy->add_option("--scenario", scenario_name, "Plan and install a corpus scenario");
  deploy->add_option("--image", image_in, "Firmware image (manual mode)");
  deploy->add_option("--patch", bin_in, "Patch binary (manual mode)");
  deploy->add_option("--update", update_str, "Update address (manual mode)");
  deploy->add_option("--strategy", strategy, "pass | skip | caller (manual mode)");
  deploy->add_option("--trigger", trigger, "hw | sw | hook");
  deploy->add_option("--profile", profile_name, "soft16 | hard16");

  // run
  std::string input_file;
  std::uint64_t max_cycles = 2'000'000;
  auto* run = app.add_subcommand("run", "Boot an image, feed input, print the output trace");
  run->add_option("image", image_in)->required()->check(CLI::ExistingFile);
  run->add_option("--input", input_file, "Raw input bytes")->check(CLI::ExistingFile);
  run->add_option("--profile", profile_name, "Fallback when the image has no sidecar");
  run->add_option("--max-cycles", max_cycles);

  // measure
  unsigned patches = 64;
  std::string m_profile = "all";
  auto* measure = app.add_subcommand("measure", "Sweep 1..k installed empty patches and time every trap");
  measure->add_option("--patches", patches, "k")->check(CLI::Range(1u, kMeasureSites));
  measure->add_option("--profile", m_profile, "soft16 | hard16 | all");
  measure->add_option("--trigger", trigger, "hw | sw | hook");

  // scenario
  std::vector<std::string> names;
  std::string s_profile = "all", s_trigger = "all", s_text, corpus_dir = default_corpus_dir().string();
  bool bless = false;
  auto* scenario = app.add_subcommand("scenario", "Run corpus scenarios end to end");
  scenario->add_option("names", names, "Scenario names (default: all)");
  scenario->add_option("--profile", s_profile, "soft16 | hard16 | all");
  scenario->add_option("--trigger", s_trigger, "hw | sw | hook | all");
  scenario->add_option("--text", s_text, "flash | sram (default: per trigger)");
  scenario->add_option("--corpus", corpus_dir);
  scenario->add_flag("--bless", bless, "Rewrite golden traces from the fixed images");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      std::string src;
      for (const auto& f : build_srcs) src += read_text(f) + "\n";
      const auto fw = build_firmware(src, profile_by_name(profile_name), placement_arg(text), build_wdt);
      fw.image.save(build_out);
      fw.sidecar.save(sidecar_path(build_out));
      std::cout << build_out << ": entry " << hex(fw.image.entry) << ", " << fw.sidecar.functions.size()
                << " functions\n";
    } else if (*diff) {
      const auto a = load_firmware(old_img), b = load_firmware(new_img);
      const auto rep = bindiff(a.image, a.sidecar, b.image, b.sidecar);
      for (const auto& f : rep.functions) {
        std::cout << f.function << " " << hex(f.first_divergence_addr) << " old_len " << f.old_len << " new_len "
                  << f.new_len << "\n";
      }
      if (rep.empty()) std::cout << "no code changes\n";
    } else if (*analyze) {
      const auto a = load_firmware(old_img), b = load_firmware(new_img);
      const auto rep = bindiff(a.image, a.sidecar, b.image, b.sidecar);
      const auto vars = split_csv(vars_csv);
      const auto sel = select_update_point(rep, a.sidecar, vars, trigger_arg(trigger), a.image, {function, {}});
      if (auto* r = std::get_if<Rejection>(&sel)) throw Rejected{std::string(reject_name(r->reason)), r->detail};
      const auto& up = std::get<UpdatePoint>(sel);
      const auto layout = frame_layout(image_profile(old_img, profile_name));
      CompileContext ctx;
      ctx.map = compose(build_r1(a.sidecar, a.image, up.addr, vars), build_r2(layout), up.addr, layout);
      ctx.targets = return_targets(up.addr, a.image, a.sidecar, rep.find(up.function));
      for (const auto& g : a.sidecar.globals) ctx.symbols[g.name] = g.addr;
      for (const auto& [n, v] : firmware_predefined()) ctx.symbols.emplace(n, static_cast<Addr>(v));
      const auto out = context_to_text(ctx);
      if (map_out.empty()) {
        std::cout << out;
      } else {
        std::ofstream(map_out) << out;
        std::cout << up.function << " update " << hex(up.addr) << " -> " << map_out << "\n";
      }
    } else if (*genpatch) {
      const auto src = read_text(ps_src);
      const auto bin = compile_patch(src, context_from_text(read_text(map_in)));
      if (bin_out.empty()) bin_out = std::filesystem::path(ps_src).replace_extension(".bin").string();
      bin.save(bin_out);
      const auto st = declared_strategy(src);
      std::cout << bin_out << ": " << bin.code.size() << " bytes, " << bin.loops.size() << " loops, strategy "
                << (st ? strategy_name(*st) : "none") << "\n";
    } else if (*verify_cmd) {
      const auto bin = PatchBinary::load(bin_in);
      const auto model = TimingModel::of(build_runtime(profile_by_name(profile_name)));
      const auto v = verify(bin, model, {wdt, crit});
      std::cout << v.to_text() << "\n";
      if (!v.admit) throw Rejected{v.reason, v.to_text()};
    } else if (*deploy) {
      std::ofstream stream(port, std::ios::binary);
      if (!stream) throw std::runtime_error("cannot open port " + port);
      const auto& prof = profile_by_name(profile_name);
      const TriggerKind t = trigger_arg(trigger);
      RunOutput out;
      if (!scenario_name.empty()) {
        const auto s = load_scenario(default_corpus_dir(), scenario_name);
        const auto pair = build_pair(s, prof, default_placement(t));
        auto planned = plan_scenario(s, pair, t);
        if (auto* f = std::get_if<Failure>(&planned)) print_failure(*f);
        const auto& plan = std::get<Plan>(planned);
        out = run_firmware(pair.vuln, s.exploit, &plan.bundle, &stream);
        for (const auto& p : plan.patches) {
          std::cout << "node " << p.function << " " << hex(p.point.addr) << " -> " << hex(p.patch_addr) << " "
                    << p.binary.code.size() << " bytes" << (p.shared ? " (shared)" : "") << "\n";
        }
      } else {
        if (image_in.empty() || bin_in.empty() || update_str.empty()) {
          throw std::runtime_error("manual deploy needs --image, --patch and --update");
        }
        FirmwareBuild fw;
        fw.image = FirmwareImage::load(image_in);
        fw.sidecar = DebugSidecar::load(sidecar_path(image_in));
        fw.runtime = build_runtime(image_profile(image_in, profile_name));
        const auto bin = PatchBinary::load(bin_in);
        const Addr upd = parse_addr(update_str);
        auto ps = parse_strategy(strategy);
        if (!ps) throw std::runtime_error("unknown strategy " + strategy);
        const auto len = static_cast<std::uint8_t>(decode_at(fw.image, upd).length());
        PatchBundle b;
        PatchNode node;
        node.update_addr = upd;
        node.patch_addr = layout::kPatchBase;
        node.trigger = t;
        node.strategy = {*ps, 0};
        node.size = static_cast<std::uint32_t>(bin.code.size());
        node.original_instr_len = len;
        node.code = bin.code;
        b.nodes.push_back(std::move(node));
        out = run_firmware(fw, {}, &b, &stream);
      }
      if (!out.install) throw Rejected{out.halt ? std::string(cause_name(*out.halt)) : "NotIdle", "device never idled"};
      if (!out.install->ack) throw Rejected{std::string(nack_name(out.install->reason)), "device refused the bundle"};
      std::cout << "ACK; transcript in " << port << "\n";
    } else if (*run) {
      FirmwareBuild fw;
      fw.image = FirmwareImage::load(image_in);
      fw.runtime = build_runtime(image_profile(image_in, profile_name));
      const auto input = input_file.empty() ? std::vector<std::uint8_t>{} : read_bytes(input_file);
      const auto out = run_firmware(fw, input, nullptr, nullptr, max_cycles);
      std::cout << format_trace(out.output) << "cycles " << out.cycles << "\n";
      if (out.halt) throw Rejected{std::string(cause_name(*out.halt)), "firmware halted"};
    } else if (*measure) {
      const TriggerKind t = trigger_arg(trigger);
      std::cout << "profile k t_exception t_dispatch_median t_dispatch_max compares bound t_total_max\n";
      for (const auto* prof : profiles_arg(m_profile)) {
        for (const auto& p : measure_sweep(*prof, patches, t)) {
          std::cout << prof->name << " " << p.count << " " << p.t_exception_min
                    << (p.t_exception_min == p.t_exception_max ? "" : "!") << " " << p.t_dispatch_median << " "
                    << p.t_dispatch_max << " " << p.max_comparisons << " " << lookup_bound(p.count) << " "
                    << p.t_total_max << "\n";
        }
      }
    } else if (*scenario) {
      if (names.empty()) names = list_scenarios(corpus_dir);
      bool all_ok = true;
      for (const auto& name : names) {
        const auto s = load_scenario(corpus_dir, name);
        std::vector<TriggerKind> triggers = s.triggers;
        if (s_trigger != "all") triggers = {trigger_arg(s_trigger)};
        for (const auto* prof : profiles_arg(s_profile)) {
          for (TriggerKind t : triggers) {
            std::optional<TextPlacement> place;
            if (!s_text.empty()) place = placement_arg(s_text);
            const auto rep = run_scenario(s, *prof, t, place);
            std::cout << rep.summary() << "\n";
            if (rep.failure) std::cout << "  " << rep.failure->detail << "\n";
            all_ok = all_ok && rep.ok();
            if (bless && !rep.fixed_benign.output.empty()) {
              const auto g = std::filesystem::path(corpus_dir) / "golden";
              std::ofstream(g / (name + ".benign.hex")) << format_trace(rep.fixed_benign.output);
              std::ofstream(g / (name + ".exploit.hex")) << format_trace(rep.fixed_exploit.output);
            }
          }
        }
      }
      if (!all_ok) throw Rejected{"ScenarioFailed", "one or more scenario runs failed"};
    }
  } catch (const Rejected& r) {
    std::cerr << "rejected: " << r.reason << ": " << r.detail << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "rejected: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
