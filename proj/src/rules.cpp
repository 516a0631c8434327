#include "docpipe/rules.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <variant>

namespace docpipe {

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge, Contains };

struct Operand {
  bool is_fact = false;
  std::string fact;
  json literal;
};

struct Condition::Node {
  enum class Kind { Or, And, Not, Compare, Exists } kind;
  std::vector<std::shared_ptr<const Node>> children;
  CmpOp op = CmpOp::Eq;
  Operand lhs{}, rhs{};
};

namespace {

using NodePtr = std::shared_ptr<const Condition::Node>;
using Node = Condition::Node;

std::string_view op_text(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Contains: return "contains";
  }
  return "==";
}

struct Token {
  enum class Type { Ident, Number, String, Op, LParen, RParen, End } type;
  std::string text;
  double number = 0.0;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& what) {
    throw ExpressionError("condition '" + std::string(s) + "': " + what + " at offset " + std::to_string(i));
  };
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
    if (c == '(') { out.push_back({Token::Type::LParen, "("}); ++i; continue; }
    if (c == ')') { out.push_back({Token::Type::RParen, ")"}); ++i; continue; }
    if (c == '\'' || c == '"') {
      const std::size_t end = s.find(c, i + 1);
      if (end == std::string_view::npos) fail("unterminated string");
      out.push_back({Token::Type::String, std::string(s.substr(i + 1, end - i - 1))});
      i = end + 1;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i + 1;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      const std::string text(s.substr(i, j - i));
      auto n = parse_number(text);
      if (!n) fail("bad number '" + text + "'");
      out.push_back({Token::Type::Number, text, *n});
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i + 1;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' || s[j] == '.')) ++j;
      out.push_back({Token::Type::Ident, std::string(s.substr(i, j - i))});
      i = j;
      continue;
    }
    for (std::string_view op : {"==", "!=", "<=", ">=", "<", ">"}) {
      if (s.substr(i, op.size()) == op) {
        out.push_back({Token::Type::Op, std::string(op)});
        i += op.size();
        goto next;
      }
    }
    fail(std::string("unexpected character '") + c + "'");
  next:;
  }
  out.push_back({Token::Type::End, ""});
  return out;
}

bool is_keyword(const std::string& s) {
  return s == "and" || s == "or" || s == "not" || s == "contains" || s == "exists";
}

class Parser {
 public:
  Parser(std::string_view text, const std::set<std::string>& declared, std::set<std::string>& referenced)
      : text_(text), tokens_(tokenize(text)), declared_(declared), referenced_(referenced) {}

  NodePtr parse() {
    NodePtr root = parse_or();
    if (peek().type != Token::Type::End) fail("unexpected '" + peek().text + "'");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ExpressionError("condition '" + std::string(text_) + "': " + what);
  }
  const Token& peek() const { return tokens_[pos_]; }
  bool accept_word(std::string_view w) {
    if (peek().type == Token::Type::Ident && peek().text == w) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr parse_or() {
    NodePtr left = parse_and();
    while (accept_word("or")) left = binary(Node::Kind::Or, left, parse_and());
    return left;
  }
  NodePtr parse_and() {
    NodePtr left = parse_unary();
    while (accept_word("and")) left = binary(Node::Kind::And, left, parse_unary());
    return left;
  }
  NodePtr parse_unary() {
    if (accept_word("not")) {
      auto n = std::make_shared<Node>(Node{Node::Kind::Not, {parse_unary()}, CmpOp::Eq, {}, {}});
      return n;
    }
    if (accept_word("exists")) {
      bool paren = false;
      if (peek().type == Token::Type::LParen) {
        ++pos_;
        paren = true;
      }
      Operand fact = parse_operand();
      if (!fact.is_fact) fail("exists needs a fact name");
      if (paren) expect_rparen();
      auto n = std::make_shared<Node>(Node{Node::Kind::Exists, {}, CmpOp::Eq, {}, {}});
      n->lhs = std::move(fact);
      return n;
    }
    if (peek().type == Token::Type::LParen) {
      ++pos_;
      NodePtr inner = parse_or();
      expect_rparen();
      return inner;
    }
    return parse_comparison();
  }
  NodePtr parse_comparison() {
    Operand lhs = parse_operand();
    CmpOp op;
    if (peek().type == Token::Type::Op) {
      const std::string& t = peek().text;
      op = t == "==" ? CmpOp::Eq : t == "!=" ? CmpOp::Ne : t == "<" ? CmpOp::Lt : t == "<=" ? CmpOp::Le
         : t == ">" ? CmpOp::Gt : CmpOp::Ge;
      ++pos_;
    } else if (accept_word("contains")) {
      op = CmpOp::Contains;
    } else if (lhs.is_fact && accept_word("exists")) {
      auto n = std::make_shared<Node>(Node{Node::Kind::Exists, {}, CmpOp::Eq, {}, {}});
      n->lhs = std::move(lhs);
      return n;
    } else {
      fail("expected a comparison operator after '" + (lhs.is_fact ? lhs.fact : lhs.literal.dump()) + "'");
    }
    Operand rhs = parse_operand();
    auto n = std::make_shared<Node>(Node{Node::Kind::Compare, {}, CmpOp::Eq, {}, {}});
    n->op = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
  }
  Operand parse_operand() {
    const Token t = peek();
    ++pos_;
    switch (t.type) {
      case Token::Type::Number: return {false, {}, json(t.number)};
      case Token::Type::String: return {false, {}, json(t.text)};
      case Token::Type::Ident:
        if (is_keyword(t.text)) fail("unexpected keyword '" + t.text + "'");
        if (!declared_.count(t.text)) fail("undeclared fact '" + t.text + "'");
        referenced_.insert(t.text);
        return {true, t.text, {}};
      default: fail(t.type == Token::Type::End ? "unexpected end" : "unexpected '" + t.text + "'");
    }
  }
  void expect_rparen() {
    if (peek().type != Token::Type::RParen) fail("expected ')'");
    ++pos_;
  }
  static NodePtr binary(Node::Kind kind, NodePtr a, NodePtr b) {
    return std::make_shared<Node>(Node{kind, {std::move(a), std::move(b)}, CmpOp::Eq, {}, {}});
  }

  std::string_view text_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  const std::set<std::string>& declared_;
  std::set<std::string>& referenced_;
};

std::optional<double> numeric(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_number(v.get<std::string>());
  return std::nullopt;
}

std::string text_of(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

bool compare_one(const json& a, const json& b, CmpOp op) {
  if (op == CmpOp::Contains) return text_of(a).find(text_of(b)) != std::string::npos;
  const auto na = numeric(a);
  const auto nb = numeric(b);
  if (na && nb) {
    switch (op) {
      case CmpOp::Eq: return *na == *nb;
      case CmpOp::Ne: return *na != *nb;
      case CmpOp::Lt: return *na < *nb;
      case CmpOp::Le: return *na <= *nb;
      case CmpOp::Gt: return *na > *nb;
      case CmpOp::Ge: return *na >= *nb;
      default: break;
    }
  }
  if (a.is_string() && b.is_string()) {
    const auto sa = a.get<std::string>();
    const auto sb = b.get<std::string>();
    switch (op) {
      case CmpOp::Eq: return sa == sb;
      case CmpOp::Ne: return sa != sb;
      case CmpOp::Lt: return sa < sb;
      case CmpOp::Le: return sa <= sb;
      case CmpOp::Gt: return sa > sb;
      case CmpOp::Ge: return sa >= sb;
      default: break;
    }
  }
  // Incomparable kinds: only inequality holds.
  return op == CmpOp::Ne;
}

const std::vector<json>& values_of(const FactTable& facts, const std::string& name) {
  static const std::vector<json> kNone;
  auto it = facts.find(name);
  return it == facts.end() ? kNone : it->second;
}

std::vector<json> operand_values(const Operand& o, const FactTable& facts) {
  if (!o.is_fact) return {o.literal};
  return values_of(facts, o.fact);
}

bool eval(const Node& n, const FactTable& facts) {
  switch (n.kind) {
    case Node::Kind::Or: return eval(*n.children[0], facts) || eval(*n.children[1], facts);
    case Node::Kind::And: return eval(*n.children[0], facts) && eval(*n.children[1], facts);
    case Node::Kind::Not: return !eval(*n.children[0], facts);
    case Node::Kind::Exists: return !values_of(facts, n.lhs.fact).empty();
    case Node::Kind::Compare: {
      const auto lhs = operand_values(n.lhs, facts);
      const auto rhs = operand_values(n.rhs, facts);
      if (lhs.empty() || rhs.empty()) return false;
      for (const auto& a : lhs)
        for (const auto& b : rhs)
          if (!compare_one(a, b, n.op)) return false;
      return true;
    }
  }
  return false;
}

std::string format_value(const json& v) {
  if (v.is_number()) {
    const double d = v.get<double>();
    if (std::fabs(d) < 1e15 && d == std::floor(d)) return std::to_string(static_cast<long long>(d));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", d);
    return buf;
  }
  if (v.is_string()) return "'" + v.get<std::string>() + "'";
  return v.dump();
}

std::string render_operand(const Operand& o, const FactTable& facts) {
  if (!o.is_fact) return format_value(o.literal);
  const auto& values = values_of(facts, o.fact);
  if (values.empty()) return o.fact + "=<missing>";
  if (values.size() == 1) return format_value(values.front());
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + format_value(values[i]);
  return out + "]";
}

std::string render_node(const Node& n, const FactTable& facts, bool nested) {
  switch (n.kind) {
    case Node::Kind::Or:
    case Node::Kind::And: {
      std::string s = render_node(*n.children[0], facts, true) + (n.kind == Node::Kind::Or ? " or " : " and ") +
                      render_node(*n.children[1], facts, true);
      return nested ? "(" + s + ")" : s;
    }
    case Node::Kind::Not: return "not " + render_node(*n.children[0], facts, true);
    case Node::Kind::Exists: return "exists " + n.lhs.fact;
    case Node::Kind::Compare:
      return render_operand(n.lhs, facts) + " " + std::string(op_text(n.op)) + " " + render_operand(n.rhs, facts);
  }
  return {};
}

}  // namespace

Condition Condition::parse(std::string_view text, const std::set<std::string>& declared) {
  Condition c;
  c.text_ = std::string(text);
  Parser parser(text, declared, c.referenced_);
  c.root_ = parser.parse();
  return c;
}

bool Condition::evaluate(const FactTable& facts) const {
  if (!root_) throw ExpressionError("condition: empty");
  return eval(*root_, facts);
}

std::string Condition::render(const FactTable& facts) const {
  if (!root_) throw ExpressionError("condition: empty");
  return render_node(*root_, facts, false);
}

Condition Condition::negated() const {
  Condition c = *this;
  c.root_ = std::make_shared<Node>(Node{Node::Kind::Not, {root_}, CmpOp::Eq, {}, {}});
  c.text_ = "not (" + text_ + ")";
  return c;
}

RuleSpec make_rule(std::string rule_id, std::vector<FactBinding> facts, std::string_view condition,
                   std::vector<std::string> recommendations, std::string description) {
  RuleSpec rule;
  rule.rule_id = std::move(rule_id);
  rule.description = std::move(description);
  std::set<std::string> declared;
  for (const auto& f : facts)
    if (!declared.insert(f.name).second) throw ValidationError("rule " + rule.rule_id + ": duplicate fact '" + f.name + "'");
  rule.facts = std::move(facts);
  rule.condition = Condition::parse(condition, declared);
  rule.recommendations = std::move(recommendations);
  return rule;
}

std::vector<RuleSpec> rules_from_json(const json& doc, const ClassConfig* classes) {
  if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array())
    throw ValidationError("rules: expected {\"rules\": [...]}");
  std::vector<RuleSpec> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc["rules"].size(); ++i) {
    const json& r = doc["rules"][i];
    const std::string path = "rules[" + std::to_string(i) + "]";
    if (!r.is_object() || !r.contains("rule_id") || !r["rule_id"].is_string())
      throw ValidationError(path + ".rule_id: missing");
    const std::string id = r["rule_id"].get<std::string>();
    if (!ids.insert(id).second) throw ValidationError(path + ".rule_id: duplicate '" + id + "'");
    std::vector<FactBinding> facts;
    for (const auto& f : r.value("facts", json::array())) {
      if (!f.is_object() || !f.contains("name") || !f.contains("class") || !f.contains("attribute"))
        throw ValidationError(path + ".facts: each fact needs name, class, attribute");
      FactBinding b{f["name"].get<std::string>(), f["class"].get<std::string>(), f["attribute"].get<std::string>()};
      if (classes) {
        const ClassSchema* cls = find_class(*classes, b.class_name);
        if (!cls) throw ValidationError(path + ".facts." + b.name + ": unknown class '" + b.class_name + "'");
        if (!cls->find_attribute(b.attribute))
          throw ValidationError(path + ".facts." + b.name + ": unknown attribute '" + b.attribute + "'");
      }
      facts.push_back(std::move(b));
    }
    if (!r.contains("condition") || !r["condition"].is_string()) throw ValidationError(path + ".condition: missing");
    out.push_back(make_rule(id, std::move(facts), r["condition"].get<std::string>(),
                            r.value("recommendations", std::vector<std::string>{}),
                            r.value("description", std::string())));
  }
  return out;
}

std::vector<RuleSpec> load_rules(const std::filesystem::path& path, const ClassConfig* classes) {
  return rules_from_json(read_document(path), classes);
}

std::string_view to_string(DeterminationStatus status) {
  switch (status) {
    case DeterminationStatus::Pass: return "pass";
    case DeterminationStatus::Fail: return "fail";
    case DeterminationStatus::InformationNotFound: return "information_not_found";
  }
  return "information_not_found";
}

json to_json(const Fact& fact) {
  return json{{"fact_name", fact.fact_name},
              {"value", fact.value},
              {"source", {{"section_id", fact.section_id}, {"attribute", fact.attribute}}},
              {"confidence", fact.confidence}};
}

json to_json(const Determination& d) {
  json evidence = json::array();
  for (const auto& f : d.evidence) evidence.push_back(to_json(f));
  return json{{"status", to_string(d.status)},
              {"evidence", std::move(evidence)},
              {"reasoning", d.reasoning},
              {"recommendations", d.recommendations}};
}

std::vector<Fact> curate_facts(const RuleSpec& rule, std::span<const SectionResult> sections) {
  std::vector<Fact> facts;
  for (const auto& binding : rule.facts) {
    for (const auto& [section, result] : sections) {
      if (section.class_name != binding.class_name || !result.ok()) continue;
      const AttributeValue* v = result.find(binding.attribute);
      if (!v || v->value.is_null()) continue;
      facts.push_back({binding.name, v->value, section.section_id, binding.attribute, v->confidence});
    }
  }
  return facts;
}

Determination consolidate(const RuleSpec& rule, std::span<const Fact> facts) {
  Determination d;
  FactTable table;
  for (const auto& f : facts) table[f.fact_name].push_back(f.value);

  std::vector<std::string> missing;
  for (const auto& b : rule.facts)
    if (values_of(table, b.name).empty()) missing.push_back(b.name);
  if (!missing.empty()) {
    d.status = DeterminationStatus::InformationNotFound;
    d.reasoning = "missing facts:";
    for (std::size_t i = 0; i < missing.size(); ++i) d.reasoning += (i ? ", " : " ") + missing[i];
    for (const auto& f : facts) d.evidence.push_back(f);
    return d;
  }
  const bool holds = rule.condition.evaluate(table);
  d.status = holds ? DeterminationStatus::Pass : DeterminationStatus::Fail;
  d.reasoning = rule.condition.render(table) + (holds ? " is true" : " is false");
  for (const auto& b : rule.facts)
    for (const auto& f : facts)
      if (f.fact_name == b.name) d.evidence.push_back(f);
  if (!holds) d.recommendations = rule.recommendations;
  return d;
}

std::vector<std::pair<std::string, Determination>> validate_all(std::span<const RuleSpec> rules,
                                                                 std::span<const SectionResult> sections) {
  std::vector<std::pair<std::string, Determination>> out;
  out.reserve(rules.size());
  for (const auto& rule : rules) out.emplace_back(rule.rule_id, consolidate(rule, curate_facts(rule, sections)));
  return out;
}

}  // namespace docpipe
