#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace agentgraph::prompts {

// Minimal template language: {name} substitutes vars.at("name"); unknown
// names are left verbatim; "{{" and "}}" are literal braces. Substituted
// values are never re-scanned, so question text containing braces is safe.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

// Number of {name} sites render() would substitute for this name.
std::size_t count_placeholder(std::string_view tmpl, std::string_view name);

// Reads a template file; a single trailing newline is stripped so files can
// end with one without it leaking into prompts.
std::string load_file(const std::string& path);

// Shipped templates. The same texts live under prompts/ as fixture files; a
// unit test keeps the two in sync.
const std::string& solver_round_one();  // {question}; also the single-agent default
const std::string& solver_later_round();// {solutions}, {question}
const std::string& summarizer();        // {solutions}, {question}
const std::string& rater_scaled();      // no placeholders; used as system prompt
const std::string& rater_binary();
const std::string& pipeline_analyzer(); // {question}
const std::string& pipeline_coder();    // {question}, {analysis}

// "One agent solution: <text>" blocks joined by blank lines.
std::string solution_blocks(const std::vector<std::string>& texts);

// Appended to solver prompts so answers self-report confidence on 1..scale.
std::string confidence_suffix(int scale);

} // namespace agentgraph::prompts
