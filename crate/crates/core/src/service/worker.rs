use std::sync::{mpsc, Arc, Mutex};

use tokio::sync::oneshot;

use super::ServiceState;
use crate::agent::{Agent, AgentError, Feedback, Session, SessionStatus};
use crate::host::HostState;

pub(crate) enum Command {
    Feedback(Feedback, oneshot::Sender<Result<Session, AgentError>>),
    Rollback(Option<u64>, oneshot::Sender<Result<Session, AgentError>>),
}

/// Drives one session on its own thread. While paused it waits for
/// commands; it exits once the session is terminal.
pub(crate) struct Worker {
    pub st: Arc<ServiceState>,
    pub agent: Agent,
    pub host: Arc<Mutex<HostState>>,
    pub live: bool,
    pub rx: mpsc::Receiver<Command>,
}

impl Worker {
    pub fn spawn(self, session: Session) {
        std::thread::Builder::new()
            .name(format!("session-{}", session.id))
            .spawn(move || self.run(session))
            .expect("spawn session worker");
    }

    fn publish(&self, state: &HostState) {
        *self.host.lock().unwrap() = state.clone();
        if self.live {
            if let Err(e) = self.st.store.save_host(state) {
                tracing::error!("saving host state: {e}");
            }
        }
    }

    fn run(self, mut s: Session) {
        let mut state = self.host.lock().unwrap().clone();
        loop {
            while s.status == SessionStatus::Running {
                let r = self.agent.step(&mut s, &mut state);
                self.publish(&state);
                if let Err(e) = r {
                    tracing::warn!("session {}: {e}", s.id);
                    break;
                }
            }
            if s.status.is_terminal() || s.status == SessionStatus::Running {
                break;
            }
            match self.rx.recv() {
                Ok(Command::Feedback(fb, reply)) => {
                    let r = self.agent.incorporate_feedback(&mut s, &mut state, fb);
                    self.publish(&state);
                    let _ = reply.send(r.map(|_| s.clone()));
                }
                Ok(Command::Rollback(snap, reply)) => {
                    let r = self.agent.rollback_session(&mut s, &mut state, snap);
                    self.publish(&state);
                    let _ = reply.send(r.map(|_| s.clone()));
                }
                Err(_) => break,
            }
        }
        self.st.handles.lock().unwrap().remove(&s.id);
        if self.live {
            self.st.release_live(&s.id);
        }
    }
}
