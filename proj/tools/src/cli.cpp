#include "idiolens/cli.hpp"

#include <cstdlib>
#include <iostream>

#include <fmt/format.h>

#include "commands.hpp"
#include "idiolens/error.hpp"
#include "idiolens/io.hpp"
#include "idiolens/text.hpp"

namespace idiolens::cli {

std::uint64_t Context::seed() const {
  const char* env = std::getenv("IDIOLENS_SEED");
  if (!env || !*env) return seed_flag;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used == std::string_view(env).size() && env[0] != '-') return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::input, fmt::format("IDIOLENS_SEED is not an unsigned integer: '{}'", env));
}

void Context::warn(const std::string& message) const { err << "warning: " << message << '\n'; }

std::pair<std::string, fs::path> language_path(const std::string& spec, const Context& ctx) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) return {ctx.language, spec};
  if (eq == 0) fail(ErrorKind::input, fmt::format("empty language in '{}'", spec));
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (text.empty() || text == "none") return out;
  std::string cur;
  auto flush = [&] {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(cur, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (cur.empty() || used != cur.size()) fail(ErrorKind::input, fmt::format("bad integer '{}' in list '{}'", cur, text));
    out.push_back(v);
    cur.clear();
  };
  for (char c : text) {
    if (c == ',' || c == '+')
      flush();
    else
      cur.push_back(c);
  }
  flush();
  return out;
}

std::string join_ints(const std::vector<int>& values, char sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(sep);
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<Category> parse_categories(const std::vector<std::string>& names) {
  std::vector<Category> out;
  for (const auto& n : names) out.push_back(parse_category(n));
  return out;
}

std::optional<LabelMap> maybe_labels(const fs::path& path) {
  if (path.empty()) return std::nullopt;
  return load_labels(path);
}

std::vector<PieSentence> sentences_for(const CorpusSet& corpus, SubsetKind filter, Category category,
                                       const LabelMap* labels, const DumpIndex* dumps, const Context& ctx) {
  const CorpusSet chosen = select_category(filter_subset(corpus, filter, labels), category, labels);
  std::vector<PieSentence> out;
  std::size_t missing = 0;
  for (const auto& s : chosen) {
    if (dumps && !dumps->count(s.id)) {
      ++missing;
      continue;
    }
    out.push_back(s);
  }
  if (missing)
    ctx.warn(fmt::format("{}: {} of {} sentences have no dump and were skipped", to_string(category), missing,
                         chosen.size()));
  return out;
}

std::vector<ActivationDump> load_variant(const fs::path& path, DumpVariant::Kind kind) {
  std::vector<ActivationDump> all = read_dumps(path);
  std::vector<ActivationDump> out;
  for (auto& d : all)
    if (d.variant.kind == kind) out.push_back(std::move(d));
  return out;
}

void write_output(const fs::path& path, const std::string& contents) { write_file_atomic(path, contents); }

namespace {

int exit_code_for(ErrorKind kind) { return kind == ErrorKind::numerical ? kNumericalError : kDataError; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Idiom translation interpretability analyses", "idiolens"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  Context ctx{out, err};
  app.add_option("--seed", ctx.seed_flag, "Random seed (IDIOLENS_SEED overrides)");
  app.add_option("--jobs", ctx.jobs, "Worker threads; 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--language", ctx.language, "Language code written to reports");
  add_corpus_commands(app, ctx);
  add_attention_commands(app, ctx);
  add_repr_commands(app, ctx);
  add_probe_commands(app, ctx);
  add_report_command(app, ctx);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const DumpError& e) {
    err << "error: " << e.what() << " (code " << static_cast<int>(e.code()) << ")\n";
    return kDataError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace idiolens::cli
