#include "blocktx/schedule_log.hpp"

#include <sstream>
#include <stdexcept>

namespace blocktx {

namespace {

const char* kind_name(ScheduleEvent::Kind k) {
  switch (k) {
    case ScheduleEvent::Kind::BeginTx: return "begin_tx";
    case ScheduleEvent::Kind::EndTx: return "end_tx";
    case ScheduleEvent::Kind::AbortTx: return "abort_tx";
    case ScheduleEvent::Kind::Commit: return "commit";
    case ScheduleEvent::Kind::BeginOp: return "begin_op";
    case ScheduleEvent::Kind::EndOpOk: return "end_op_ok";
    case ScheduleEvent::Kind::EndOpFail: return "end_op_fail";
    case ScheduleEvent::Kind::Action: return "action";
    case ScheduleEvent::Kind::LockAcquired: return "lock";
  }
  return "?";
}

ScheduleEvent::Kind kind_from_name(const std::string& s) {
  if (s == "begin_tx") return ScheduleEvent::Kind::BeginTx;
  if (s == "end_tx") return ScheduleEvent::Kind::EndTx;
  if (s == "abort_tx") return ScheduleEvent::Kind::AbortTx;
  if (s == "commit") return ScheduleEvent::Kind::Commit;
  if (s == "begin_op") return ScheduleEvent::Kind::BeginOp;
  if (s == "end_op_ok") return ScheduleEvent::Kind::EndOpOk;
  if (s == "end_op_fail") return ScheduleEvent::Kind::EndOpFail;
  if (s == "action") return ScheduleEvent::Kind::Action;
  if (s == "lock") return ScheduleEvent::Kind::LockAcquired;
  throw std::invalid_argument("unknown schedule event: " + s);
}

std::string hex_or_dash(const Bytes& b) { return b.empty() ? "-" : to_hex(b); }

Bytes bytes_from_field(const std::string& s) { return s == "-" ? Bytes{} : from_hex(s); }

std::uint64_t u64_from_field(const std::string& s, const char* what) {
  if (s == "-") return 0;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("bad ") + what + " field: " + s);
  }
}

}  // namespace

// Line schema: tx_id op_id event block mode latchcount [extra...]
//   begin_op carries "op_type args_hex", end_op_ok carries "result_hex",
//   lock uses the mode column for S/X. Dashes mark unused columns.
std::string format_event(const ScheduleEvent& e) {
  std::ostringstream out;
  out << e.tx << ' ';
  switch (e.kind) {
    case ScheduleEvent::Kind::BeginTx:
    case ScheduleEvent::Kind::EndTx:
    case ScheduleEvent::Kind::AbortTx:
    case ScheduleEvent::Kind::Commit:
      out << "- " << kind_name(e.kind) << " - - -";
      break;
    case ScheduleEvent::Kind::BeginOp:
      out << e.op << " begin_op - - - " << e.op_type << ' ' << hex_or_dash(e.args);
      break;
    case ScheduleEvent::Kind::EndOpOk:
      out << e.op << " end_op_ok - - - " << hex_or_dash(e.result);
      break;
    case ScheduleEvent::Kind::EndOpFail:
      out << e.op << " end_op_fail - - -";
      break;
    case ScheduleEvent::Kind::Action:
      out << e.op << " action " << e.block << ' ' << mode_char(e.mode) << ' ' << e.latch_snapshot;
      break;
    case ScheduleEvent::Kind::LockAcquired:
      out << e.op << " lock " << e.block << ' ' << mode_char(e.lock_mode) << " -";
      break;
  }
  return out.str();
}

ScheduleEvent parse_event(const std::string& line) {
  std::istringstream in(line);
  std::string tx_s, op_s, kind_s, block_s, mode_s, count_s;
  if (!(in >> tx_s >> op_s >> kind_s >> block_s >> mode_s >> count_s)) {
    throw std::invalid_argument("malformed schedule line: " + line);
  }
  ScheduleEvent e;
  e.kind = kind_from_name(kind_s);
  e.tx = u64_from_field(tx_s, "tx");
  e.op = u64_from_field(op_s, "op");
  e.block = u64_from_field(block_s, "block");
  if (mode_s != "-") {
    if (mode_s.size() != 1) throw std::invalid_argument("bad mode field: " + mode_s);
    switch (mode_s[0]) {
      case 'R': e.mode = AccessMode::Read; break;
      case 'W': e.mode = AccessMode::Write; break;
      case 'S': e.lock_mode = LockMode::Shared; break;
      case 'X': e.lock_mode = LockMode::Exclusive; break;
      default: throw std::invalid_argument("bad mode field: " + mode_s);
    }
  }
  e.latch_snapshot = u64_from_field(count_s, "latchcount");
  if (e.kind == ScheduleEvent::Kind::BeginOp) {
    std::string type_s, args_s;
    if (!(in >> type_s >> args_s)) throw std::invalid_argument("begin_op missing fields: " + line);
    e.op_type = static_cast<OpType>(u64_from_field(type_s, "op_type"));
    e.args = bytes_from_field(args_s);
  } else if (e.kind == ScheduleEvent::Kind::EndOpOk) {
    std::string result_s;
    if (!(in >> result_s)) throw std::invalid_argument("end_op_ok missing result: " + line);
    e.result = bytes_from_field(result_s);
  }
  return e;
}

std::string format_log(const std::vector<ScheduleEvent>& events) {
  std::string out;
  for (const ScheduleEvent& e : events) {
    out += format_event(e);
    out += '\n';
  }
  return out;
}

std::vector<ScheduleEvent> parse_log(const std::string& text) {
  std::vector<ScheduleEvent> events;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    events.push_back(parse_event(line));
  }
  return events;
}

}  // namespace blocktx
