use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::*;
use crate::annotator::QANode;

fn node(id: &str, stage: Stage) -> QANode {
    QANode::new(id, stage, format!("q {id}?"), format!("a {id}"))
}

/// road + one object chain + ego plan, then b and m.
fn sample() -> QAGraph {
    let mut g = QAGraph::new("f1");
    for (id, st) in [
        ("p1_road", Stage::P1),
        ("p1_obj", Stage::P1),
        ("p2_obj", Stage::P2),
        ("p3_obj", Stage::P3),
        ("p3_ego", Stage::P3),
        ("b", Stage::B),
        ("m", Stage::M),
    ] {
        g.add_node(node(id, st)).unwrap();
    }
    for (p, c) in [
        ("p1_obj", "p2_obj"),
        ("p2_obj", "p3_obj"),
        ("p1_road", "b"),
        ("p3_obj", "b"),
        ("p3_ego", "b"),
        ("b", "m"),
    ] {
        g.add_edge(p, c).unwrap();
    }
    g
}

/// Records requests and answers with the question upper-cased.
#[derive(Default)]
struct Recorder {
    seen: Mutex<Vec<AnswerRequest>>,
    fail: Vec<String>,
    batches: AtomicUsize,
}

impl Answerer for Recorder {
    fn answer(&self, req: &AnswerRequest) -> Result<String, AnswerError> {
        self.seen.lock().unwrap().push(req.clone());
        if self.fail.iter().any(|f| req.id.ends_with(&format!("/{f}"))) {
            return Err(AnswerError::Remote("boom".into()));
        }
        Ok(req.question.to_uppercase())
    }

    fn answer_batch(&self, reqs: &[AnswerRequest]) -> Vec<Result<String, AnswerError>> {
        self.batches.fetch_add(1, Ordering::SeqCst);
        reqs.iter().map(|r| self.answer(r)).collect()
    }

    fn name(&self) -> String {
        "recorder".into()
    }
}

#[test]
fn policy_names_round_trip() {
    for p in ContextPolicy::ALL {
        assert_eq!(p.to_string().parse::<ContextPolicy>().unwrap(), p);
    }
    assert!("parents".parse::<ContextPolicy>().is_err());
}

#[test]
fn oracle_reproduces_ground_truth() {
    let g = sample();
    let oracle = OracleAnswerer::from_graphs([&g]);
    let r = run_graph(&g, &oracle, ContextPolicy::Graph).unwrap();
    assert!(r.failed.is_empty());
    for (id, n) in &g.nodes {
        assert_eq!(r.answers[id], n.answer);
    }
    assert_eq!(r.trace.len(), 7);
}

#[test]
fn trace_respects_parents() {
    let g = sample();
    let r = run_graph(&g, &Recorder::default(), ContextPolicy::Graph).unwrap();
    let pos = |id: &str| r.trace.iter().position(|t| t == id).unwrap();
    for (p, c) in &g.edges {
        assert!(pos(p) < pos(c), "{p} before {c}");
    }
    assert_eq!(r.trace.last().unwrap(), "m");
}

#[test]
fn graph_context_lists_parents_in_order() {
    let g = sample();
    let rec = Recorder::default();
    run_graph(&g, &rec, ContextPolicy::Graph).unwrap();
    let seen = rec.seen.lock().unwrap();
    let b = seen.iter().find(|r| r.id == "f1/b").unwrap();
    assert_eq!(
        b.context,
        "Context: Q: q p1_road? A: Q P1_ROAD? Q: q p3_ego? A: Q P3_EGO? Q: q p3_obj? A: Q P3_OBJ?"
    );
    let p1 = seen.iter().find(|r| r.id == "f1/p1_road").unwrap();
    assert_eq!(p1.context, "");
}

#[test]
fn policies_differ_only_in_context() {
    let g = sample();
    let ctx = |p| {
        let rec = Recorder::default();
        run_graph(&g, &rec, p).unwrap();
        let seen = rec.seen.lock().unwrap();
        seen.iter().find(|r| r.id == "f1/b").unwrap().context.clone()
    };
    assert_eq!(ctx(ContextPolicy::None), "");
    // Chain keeps only the planning parents of B.
    assert_eq!(ctx(ContextPolicy::Chain), "Context: Q: q p3_ego? A: Q P3_EGO? Q: q p3_obj? A: Q P3_OBJ?");
    assert_eq!(
        ctx(ContextPolicy::Gt),
        "Context: Q: q p1_road? A: a p1_road Q: q p3_ego? A: a p3_ego Q: q p3_obj? A: a p3_obj"
    );
}

#[test]
fn one_batch_per_wave() {
    let g = sample();
    let rec = Recorder::default();
    run_graph(&g, &rec, ContextPolicy::None).unwrap();
    // P1, P2, P3, B, M each resolve in a single wave here.
    assert_eq!(rec.batches.load(Ordering::SeqCst), 5);
}

#[test]
fn failure_propagates_to_descendants_only() {
    let g = sample();
    let rec = Recorder {
        fail: vec!["p2_obj".into()],
        ..Default::default()
    };
    let r = run_graph(&g, &rec, ContextPolicy::Graph).unwrap();
    let failed: Vec<&str> = r.failed.keys().map(String::as_str).collect();
    assert_eq!(failed, vec!["b", "m", "p2_obj", "p3_obj"]);
    assert!(r.answers.contains_key("p3_ego") && r.answers.contains_key("p1_road"));
    // Descendants are never sent.
    assert!(!rec.seen.lock().unwrap().iter().any(|q| q.id == "f1/b"));
}

#[test]
fn cyclic_graph_is_refused() {
    let mut g = sample();
    g.add_node(node("p1_x", Stage::P1)).unwrap();
    g.add_node(node("p1_y", Stage::P1)).unwrap();
    g.add_edge("p1_x", "p1_y").unwrap();
    g.add_edge("p1_y", "p1_x").unwrap();
    let rec = Recorder::default();
    let err = run_graph(&g, &rec, ContextPolicy::Graph).unwrap_err();
    assert!(matches!(err, RuntimeError::InvalidGraph { .. }));
    assert!(rec.seen.lock().unwrap().is_empty());
}

#[test]
fn unanswered_parent_is_an_error() {
    let g = sample();
    let err = assemble_context("b", &g, &BTreeMap::new(), ContextPolicy::Graph).unwrap_err();
    assert_eq!(
        err,
        RuntimeError::UnansweredParent {
            node: "b".into(),
            parent: "p1_road".into()
        }
    );
    assert!(assemble_context("b", &g, &BTreeMap::new(), ContextPolicy::Gt).is_ok());
}

#[test]
fn teacher_forcing_uses_ground_truth() {
    let g = sample();
    let pairs = teacher_forcing_pairs(&g);
    assert_eq!(pairs.len(), 7);
    let m = pairs.iter().find(|p| p.node == "m").unwrap();
    assert_eq!(m.input, "q m? Context: Q: q b? A: a b");
    assert_eq!(m.target, "a m");
    let road = pairs.iter().find(|p| p.node == "p1_road").unwrap();
    assert_eq!(road.input, "q p1_road?");
}

#[test]
fn subgraph_filter_terms() {
    let g = sample();
    let f: SubgraphFilter = "P1,p*_obj".parse().unwrap();
    let sub = f.apply(&g);
    let ids: Vec<&str> = sub.nodes.keys().map(String::as_str).collect();
    assert_eq!(ids, vec!["p1_obj", "p1_road", "p2_obj", "p3_obj"]);
    assert_eq!(sub.edges.len(), 2);
    let r = run_graph(&sub, &Recorder::default(), ContextPolicy::Graph).unwrap();
    assert_eq!(r.answers.len(), 4);
    assert!("P1,,b".parse::<SubgraphFilter>().is_err());
    assert!(glob_match("a*c*e", "abcde") && !glob_match("a*c", "abd"));
}

#[test]
fn pred_file_round_trips() {
    let g = sample();
    let r = run_graph(&g, &OracleAnswerer::from_graphs([&g]), ContextPolicy::Graph).unwrap();
    let mut pf = PredFile::new(Provenance::new("h", 0), "s", "oracle", ContextPolicy::Graph);
    pf.frames.push(FramePrediction {
        frame_id: g.frame_id.clone(),
        result: r,
    });
    let back = PredFile::from_json_str(&pf.to_json()).unwrap();
    assert_eq!(back, pf);
    assert!(back.frame("f1").is_some());
}

/// Answers each request with its question, via a line-buffered sed.
const ECHO_SCRIPT: &str = r#"sed -u 's/^.*"id":"\([^"]*\)".*"question":"\([^"]*\)".*$/{"id":"\1","answer":"\2"}/'"#;

fn quick() -> ExternalConfig {
    ExternalConfig {
        timeout_s: 2.0,
        retries: 1,
    }
}

#[test]
fn exec_echo_runs_graph() {
    let g = sample();
    let ans = ExecAnswerer::spawn(ECHO_SCRIPT, quick()).unwrap();
    let r = run_graph(&g, &ans, ContextPolicy::Graph).unwrap();
    assert!(r.failed.is_empty(), "{:?}", r.failed);
    assert_eq!(r.answers["m"], "q m?");
}

#[test]
fn exec_remote_errors_and_dead_process() {
    let script = r#"sed -u 's/^.*"id":"\([^"]*\)".*$/{"id":"\1","error":"nope"}/'"#;
    let ans = ExecAnswerer::spawn(script, quick()).unwrap();
    let req = AnswerRequest {
        id: "f/x".into(),
        question: "q".into(),
        context: String::new(),
        frame: "f".into(),
    };
    assert_eq!(ans.answer(&req), Err(AnswerError::Remote("nope".into())));
    let dead = ExecAnswerer::spawn("true", quick()).unwrap();
    assert!(matches!(dead.answer(&req), Err(AnswerError::Transport(_))));
}

/// Minimal HTTP/1.1 server: reads one POST per connection and replies with
/// whatever `respond` produces from the request lines.
fn serve<F>(respond: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(usize, Vec<String>) -> Vec<String> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/answer", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.trim();
                if l.is_empty() {
                    break;
                }
                if let Some(v) = l.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let lines = String::from_utf8(body).unwrap().lines().map(str::to_string).collect();
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let out: String = respond(n, lines).into_iter().map(|l| l + "\n").collect();
            let head = format!("HTTP/1.1 200 OK\r\nContent-Type: application/x-ndjson\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", out.len());
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(out.as_bytes()).unwrap();
        }
    });
    (url, hits)
}

fn echo_replies(lines: Vec<String>) -> Vec<String> {
    lines
        .iter()
        .map(|l| {
            let r: AnswerRequest = serde_json::from_str(l).unwrap();
            serde_json::to_string(&Reply {
                id: r.id,
                answer: Some(r.question),
                error: None,
            })
            .unwrap()
        })
        .collect()
}

#[test]
fn http_echo_out_of_order() {
    let (url, _) = serve(|_, lines| {
        let mut r = echo_replies(lines);
        r.reverse();
        r
    });
    let g = sample();
    let r = run_graph(&g, &HttpAnswerer::new(&url, quick()), ContextPolicy::Graph).unwrap();
    assert!(r.failed.is_empty(), "{:?}", r.failed);
    for (id, n) in &g.nodes {
        assert_eq!(r.answers[id], n.question);
    }
}

#[test]
fn http_dropped_reply_is_retried() {
    // First response drops the last reply; the retry carries only that id.
    let (url, hits) = serve(|n, lines| {
        let mut r = echo_replies(lines);
        if n == 0 {
            r.pop();
        }
        r
    });
    let reqs: Vec<AnswerRequest> = ["a", "b", "c"]
        .iter()
        .map(|q| AnswerRequest {
            id: request_id("f", q),
            question: q.to_string(),
            context: String::new(),
            frame: "f".into(),
        })
        .collect();
    let out = HttpAnswerer::new(&url, quick()).answer_batch(&reqs);
    assert_eq!(out, vec![Ok("a".to_string()), Ok("b".to_string()), Ok("c".to_string())]);
    assert_eq!(hits.load(Ordering::SeqCst), 2);

    let (url, _) = serve(|_, _| Vec::new());
    let none = ExternalConfig {
        timeout_s: 2.0,
        retries: 0,
    };
    let out = HttpAnswerer::new(&url, none).answer_batch(&reqs[..1]);
    assert!(matches!(out[0], Err(AnswerError::Timeout(_))));
}

#[test]
fn http_reply_never_sent_fails_that_node() {
    let (url, _) = serve(|_, lines| echo_replies(lines).into_iter().filter(|l| !l.contains("f1/p3_obj")).collect());
    let cfg = ExternalConfig {
        timeout_s: 2.0,
        retries: 1,
    };
    let r = run_graph(&sample(), &HttpAnswerer::new(&url, cfg), ContextPolicy::Graph).unwrap();
    let failed: Vec<&str> = r.failed.keys().map(String::as_str).collect();
    assert_eq!(failed, vec!["b", "m", "p3_obj"]);
    assert_eq!(r.answers["p3_ego"], "q p3_ego?");
    assert_eq!(r.answers["p2_obj"], "q p2_obj?");
}
