#include "agentgraph/prompts.hpp"

#include "agentgraph/errors.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace agentgraph::prompts {

namespace {

bool name_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Returns the placeholder name at tmpl[pos] == '{', or empty if this brace
// does not open a well-formed {name} site.
std::string_view site_name(std::string_view tmpl, std::size_t pos) {
    std::size_t i = pos + 1;
    if (i >= tmpl.size() || !name_start(tmpl[i])) return {};
    std::size_t begin = i;
    while (i < tmpl.size() && name_char(tmpl[i])) ++i;
    if (i >= tmpl.size() || tmpl[i] != '}') return {};
    return tmpl.substr(begin, i - begin);
}

template <typename OnSite>
void scan(std::string_view tmpl, std::string* out, OnSite on_site) {
    std::size_t i = 0;
    while (i < tmpl.size()) {
        char c = tmpl[i];
        if (c == '{') {
            if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
                if (out) *out += '{';
                i += 2;
                continue;
            }
            std::string_view name = site_name(tmpl, i);
            if (!name.empty() && on_site(name)) {
                i += name.size() + 2;
                continue;
            }
            if (out) *out += '{';
            ++i;
        } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            if (out) *out += '}';
            i += 2;
        } else {
            if (out) *out += c;
            ++i;
        }
    }
}

} // namespace

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    scan(tmpl, &out, [&](std::string_view name) {
        auto it = vars.find(std::string(name));
        if (it == vars.end()) return false;
        out += it->second;
        return true;
    });
    return out;
}

std::size_t count_placeholder(std::string_view tmpl, std::string_view name) {
    std::size_t count = 0;
    scan(tmpl, nullptr, [&](std::string_view found) {
        if (found == name) ++count;
        return false; // never substitute, just count
    });
    return count;
}

std::string load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open prompt file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

const std::string& solver_round_one() {
    static const std::string text =
        "Can you solve the following math problem? \n"
        "{question} Explain your reasoning. \n"
        "Your final answer should be a single numerical number, \n"
        "in the form \\boxed{{answer}}, at the end of your response.";
    return text;
}

const std::string& solver_later_round() {
    static const std::string text =
        "These are the solutions to the problem from other agents:\n"
        "\n"
        "{solutions}\n"
        "\n"
        "Using the solutions above as additional information, please provide your answer. "
        "The original problem is:\n"
        "{question}\n"
        "Your final answer should be a single numerical number, in the form \\boxed{{answer}}, "
        "at the end of your response.";
    return text;
}

const std::string& summarizer() {
    static const std::string text =
        "Here are solutions to a problem from several agents:\n"
        "\n"
        "{solutions}\n"
        "\n"
        "The original problem is:\n"
        "{question}\n"
        "\n"
        "Summarize the key reasoning steps and the answers from these solutions in a concise "
        "form that another agent could use to solve the problem.";
    return text;
}

const std::string& rater_scaled() {
    static const std::string text = R"PROMPT(You are an expert mathematics educator specializing in advanced competition mathematics problems.

Your task is to analyze a given math problem and rate its difficulty on a scale from 1 to 10, where:
- **1** = Very easy (e.g., middle school arithmetic)
- **10** = Extremely challenging (e.g., IMO gold medal level)

### Consider the following criteria:
- **Complexity** of mathematical concepts involved
- **Number of steps** needed to solve the problem
- **Typical success rate** among advanced students

### Output your response in the following JSON format, your response should ONLY contain that:
```json
{
  "rating": <integer from 1 to 10>
}
```

Here is an example:

Problem:
Find all real numbers x, such that ``x^2 - 4x + 4 = 0.``

Output:
```json
{
  "rating": 2
}
```)PROMPT";
    return text;
}

const std::string& rater_binary() {
    static const std::string text = R"PROMPT(You are an expert mathematics educator specializing in complex problem solving strategies.

Your task is to analyze a given math problem and classify it with a binary value (0 or 1), where:
- **0** = Simple problem suitable for a single agent (straightforward reasoning path, limited steps)
- **1** = Complex problem requiring multi-agent conversation (multiple solution paths, advanced reasoning, step-by-step verification)

### Consider the following criteria:
- **Complexity** of mathematical concepts involved
- **Number of steps** needed to solve the problem
- **Typical success rate** among advanced students

### Output your response in the following JSON format, your response should ONLY contain that:
```json
{
  "class": <0 or 1>
}
```

Here is an example:

Problem:
Solve for x: 2x + 5 = 13

Output:
```json
{
  "class": 0
}
```

Another example:

Problem:
Find all functions f: R -> R such that f(x + f(y)) = y + f(x) for all real x and y.

Output:
```json
{
  "class": 1
}
```)PROMPT";
    return text;
}

const std::string& pipeline_analyzer() {
    static const std::string text = R"PROMPT(You are a specialized code requirements analyzer. Analyze the following Python function and provide a structured JSON specification.

FUNCTION TO IMPLEMENT:
{question}


Provide a JSON output with these fields:
- task_type: The type of programming task
- entry_point: The name of the function to implement **exact the as the user provided**
- inputs: Expected inputs and their data types (from function signature)
- outputs: Expected output and its data type (from function signature)
- requirements: List of specific requirements extracted from the docstring
- examples: List of example inputs and outputs from the docstring
- edge_cases: Edge cases to consider based on the function description
- validation_needs: Input validation requirements

Output your analysis as a valid JSON object only, without any commentary:)PROMPT";
    return text;
}

const std::string& pipeline_coder() {
    static const std::string text = R"PROMPT(You are an expert Python programmer. Implement the function as the analysis.
Include the modules, the function definition or docstring and your implementation of the function body.


FUNCTION TO IMPLEMENT:
{question}

ANALYSIS:
```json
{analysis}
```

Requirements:
1. Implement the function body for the function specified in the analysis
2. Use proper indentation (4 spaces)
3. Include the importing modules, the function definition or docstring **exactly as the user provided** and the analysis specified. If you want, you could import more modules but still keep the original ones.
4. Do not include any explanations or comments
5. Follow the function signature exactly
6. Handle all edge cases from the analysis
7. Implement the logic that satisfies all examples in the docstring

Begin your response with importing modules:)PROMPT";
    return text;
}

std::string solution_blocks(const std::vector<std::string>& texts) {
    std::string out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += "One agent solution: " + texts[i];
    }
    return out;
}

std::string confidence_suffix(int scale) {
    if (scale < 1) fail(Errc::domain, "confidence scale must be >= 1");
    return "Also, provide your confidence in your answer on a scale from 1 (least confident) to " +
           std::to_string(scale) + " (most confident), in the form: Confidence: X.";
}

} // namespace agentgraph::prompts
