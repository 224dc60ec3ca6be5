//===-- nsan.cpp - Command-line driver --------------------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// The user-facing driver. Subcommands:
//
//   nsan run <file.nir> [flags]   instrument and execute; warnings and a
//                                 one-line summary go to stderr, the program's
//                                 own output goes to stdout
//   nsan instrument <file.nir>    print the instrumented module to stdout
//   nsan verify <file.nir>        type-check only; diagnostics to stderr
//   nsan dump-corpus [--dir D]    list the embedded corpus, or write it out
//
// The NSAN_OPTIONS environment variable holds comma-separated key=value pairs
// (the keys accepted by rt::set_runtime_flag); it is applied before the
// command line, so explicit flags win. Exit codes: 0 clean; --error-exit-code
// (default 0 = never fail on warnings) when the run emitted warnings; 2 when
// the program trapped; 64 usage errors; 65 missing inputs and parse, verify,
// or instrumentation failures.
//
//===----------------------------------------------------------------------===//

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "nsan/corpus_embed.hpp"
#include "nsan/interp.hpp"
#include "nsan/parser.hpp"
#include "nsan/printer.hpp"
#include "nsan/transform.hpp"
#include "nsan/verifier.hpp"

namespace {

constexpr int kExitTrap = 2;
constexpr int kExitUsage = 64;
constexpr int kExitInput = 65;

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Loads, parses and verifies one module; nullopt (with diagnostics on stderr)
// means the caller should exit kExitInput.
std::optional<nsan::ir::Module> load_module(const std::string& path) {
  std::optional<std::string> text = read_file(path);
  if (!text) {
    std::cerr << "nsan: cannot open '" << path << "'\n";
    return std::nullopt;
  }
  nsan::ir::Module m;
  try {
    m = nsan::ir::parse_module(*text);
  } catch (const nsan::ir::ParseError& e) {
    std::cerr << "nsan: " << path << ": " << e.what() << "\n";
    return std::nullopt;
  }
  std::vector<nsan::ir::Diagnostic> diags = nsan::ir::verify(m);
  if (!diags.empty()) {
    for (const nsan::ir::Diagnostic& d : diags)
      std::cerr << "nsan: " << path << ": " << d.to_string() << "\n";
    return std::nullopt;
  }
  return m;
}

// Applies NSAN_OPTIONS ("key=value,key=value,..."). Unknown keys and bad
// values are usage errors, same as their command-line spellings.
bool apply_env_options(nsan::rt::RuntimeFlags& flags) {
  const char* env = std::getenv("NSAN_OPTIONS");
  if (!env)
    return true;
  std::string_view rest(env);
  while (!rest.empty()) {
    std::size_t comma = rest.find(',');
    std::string_view pair = rest.substr(0, comma);
    rest.remove_prefix(comma == std::string_view::npos ? rest.size()
                                                       : comma + 1);
    if (pair.empty())
      continue;
    std::size_t eq = pair.find('=');
    std::string_view key = pair.substr(0, eq);
    std::string_view value =
        eq == std::string_view::npos ? std::string_view{} : pair.substr(eq + 1);
    switch (nsan::rt::set_runtime_flag(flags, key, value)) {
    case nsan::rt::FlagResult::Ok:
      break;
    case nsan::rt::FlagResult::UnknownKey:
      std::cerr << "nsan: NSAN_OPTIONS: unknown option '" << key << "'\n";
      return false;
    case nsan::rt::FlagResult::BadValue:
      std::cerr << "nsan: NSAN_OPTIONS: bad value for '" << key << "'\n";
      return false;
    }
  }
  return true;
}

std::string summary_line(const nsan::rt::RuntimeStats& s) {
  using nsan::rt::CheckKind;
  const char* names[] = {"store", "ret", "arg", "fcmp", "explicit", "load"};
  std::ostringstream os;
  os << "nsan: " << s.warnings << (s.warnings == 1 ? " warning (" : " warnings (");
  for (int k = 0; k < 6; ++k)
    os << (k ? ", " : "") << names[k] << " " << s.per_kind[k];
  os << "), " << s.resumed << " resumed, " << s.suppressed << " suppressed";
  return os.str();
}

struct RunOptions {
  std::string input;
  std::optional<double> rel_epsilon, abs_epsilon;
  bool check_loads = false, halt_on_error = false, no_dedup = false;
  bool no_check_args = false, no_check_fcmp = false, no_check_stores = false;
  std::string suppressions;
  int error_exit_code = 0;
  std::uint64_t seed = 0;
};

int cmd_run(const RunOptions& opt) {
  nsan::rt::RuntimeFlags flags;
  if (!apply_env_options(flags))
    return kExitUsage;
  if (opt.rel_epsilon)
    flags.rel_epsilon_f32 = flags.rel_epsilon_f64 = *opt.rel_epsilon;
  if (opt.abs_epsilon)
    flags.abs_epsilon_f32 = flags.abs_epsilon_f64 = *opt.abs_epsilon;
  if (opt.check_loads)
    flags.check_loads = true;
  if (opt.halt_on_error)
    flags.halt_on_error = true;
  if (opt.no_dedup)
    flags.no_dedup = true;

  std::vector<nsan::rt::Suppression> sups;
  if (!opt.suppressions.empty()) {
    std::optional<std::string> text = read_file(opt.suppressions);
    if (!text) {
      std::cerr << "nsan: cannot open '" << opt.suppressions << "'\n";
      return kExitInput;
    }
    nsan::rt::SuppressionFile file = nsan::rt::parse_suppressions(*text);
    if (!file.errors.empty()) {
      for (const std::string& e : file.errors)
        std::cerr << "nsan: " << opt.suppressions << ": " << e << "\n";
      return kExitInput;
    }
    sups = std::move(file.entries);
  }

  std::optional<nsan::ir::Module> m = load_module(opt.input);
  if (!m)
    return kExitInput;
  nsan::transform::InstrumentConfig cfg;
  cfg.check_args = !opt.no_check_args;
  cfg.check_fcmp = !opt.no_check_fcmp;
  cfg.check_stores = !opt.no_check_stores;
  nsan::ir::Module inst;
  try {
    inst = nsan::transform::instrument(*m, cfg);
  } catch (const nsan::transform::TransformError& e) {
    std::cerr << "nsan: " << opt.input << ": " << e.what() << "\n";
    return kExitInput;
  }

  nsan::rt::Runtime runtime(flags, std::move(sups), &std::cerr);
  nsan::interp::Interpreter interp(inst, runtime, std::cout, opt.seed);
  nsan::interp::RunResult result = interp.run();
  if (result.trapped) {
    std::cerr << "nsan: trap: " << result.trap_message << "\n";
    return kExitTrap;
  }
  if (result.halted)
    std::cerr << "nsan: halted on first error\n";
  std::cerr << summary_line(runtime.stats()) << "\n";
  if (runtime.stats().warnings > 0 && opt.error_exit_code != 0)
    return opt.error_exit_code;
  return 0;
}

int cmd_instrument(const RunOptions& opt) {
  std::optional<nsan::ir::Module> m = load_module(opt.input);
  if (!m)
    return kExitInput;
  nsan::transform::InstrumentConfig cfg;
  cfg.check_args = !opt.no_check_args;
  cfg.check_fcmp = !opt.no_check_fcmp;
  cfg.check_stores = !opt.no_check_stores;
  try {
    std::cout << nsan::ir::print_module(nsan::transform::instrument(*m, cfg));
  } catch (const nsan::transform::TransformError& e) {
    std::cerr << "nsan: " << opt.input << ": " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}

int cmd_verify(const std::string& input) {
  return load_module(input) ? 0 : kExitInput;
}

int cmd_dump_corpus(const std::string& dir) {
  if (dir.empty()) {
    for (const nsan::corpus::Entry& e : nsan::corpus::kEntries)
      std::cout << e.name << "\n";
    return 0;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    std::cerr << "nsan: cannot create '" << dir << "': " << ec.message() << "\n";
    return kExitInput;
  }
  for (const nsan::corpus::Entry& e : nsan::corpus::kEntries) {
    for (const char* ext : {".nir", ".expect"}) {
      std::filesystem::path path =
          std::filesystem::path(dir) / (std::string(e.name) + ext);
      std::ofstream out(path, std::ios::binary);
      out << (ext[1] == 'n' ? e.source : e.expect);
      if (!out) {
        std::cerr << "nsan: cannot write '" << path.string() << "'\n";
        return kExitInput;
      }
    }
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"nsan: a floating-point sanitizer for .nir modules"};
  app.require_subcommand(1);

  RunOptions opt;
  std::string verify_input, dump_dir;

  CLI::App* run = app.add_subcommand("run", "Instrument and execute a module");
  run->add_option("input", opt.input, "module to run")->required();
  run->add_option("--rel-epsilon", opt.rel_epsilon,
                  "relative-error consistency threshold (f32 and f64)");
  run->add_option("--abs-epsilon", opt.abs_epsilon,
                  "absolute-difference consistency threshold (f32 and f64)");
  run->add_flag("--check-loads", opt.check_loads,
                "also check values as they are loaded");
  run->add_flag("--halt-on-error", opt.halt_on_error,
                "stop at the first warning");
  run->add_flag("--no-dedup", opt.no_dedup,
                "report every hit of a warning site, not just the first");
  run->add_flag("--no-check-args", opt.no_check_args,
                "do not check values passed as arguments");
  run->add_flag("--no-check-fcmp", opt.no_check_fcmp,
                "do not check comparison consistency");
  run->add_flag("--no-check-stores", opt.no_check_stores,
                "do not check values stored to memory");
  run->add_option("--suppressions", opt.suppressions,
                  "suppression file (fun:/src: globs)");
  run->add_option("--error-exit-code", opt.error_exit_code,
                  "exit code when warnings were emitted (0 = always exit 0)")
      ->check(CLI::Range(0, 255));
  run->add_option("--seed", opt.seed,
                  "perturb the interpreter's memory layout (0 = fixed base)");

  CLI::App* instrument =
      app.add_subcommand("instrument", "Print the instrumented module");
  instrument->add_option("input", opt.input, "module to instrument")->required();
  instrument->add_flag("--no-check-args", opt.no_check_args,
                       "do not insert argument checks");
  instrument->add_flag("--no-check-fcmp", opt.no_check_fcmp,
                       "do not insert comparison checks");
  instrument->add_flag("--no-check-stores", opt.no_check_stores,
                       "do not insert store checks");

  CLI::App* verify = app.add_subcommand("verify", "Type-check a module");
  verify->add_option("input", verify_input, "module to check")->required();

  CLI::App* dump =
      app.add_subcommand("dump-corpus", "List or write the embedded corpus");
  dump->add_option("--dir", dump_dir, "write <name>.nir/.expect files here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e); // prints the message or the requested help text
    return code == 0 ? 0 : kExitUsage;
  }

  if (run->parsed())
    return cmd_run(opt);
  if (instrument->parsed())
    return cmd_instrument(opt);
  if (verify->parsed())
    return cmd_verify(verify_input);
  return cmd_dump_corpus(dump_dir);
}
