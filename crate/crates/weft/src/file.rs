//! File-mapped data blocks.
//!
//! Opening a host file produces a file object homed on one node, plus an
//! optional descriptor block whose 24 bytes hold the file's id (16) and
//! its size at open (8, little endian). A failed host open is not a run
//! error: the descriptor still arrives, flagged, and the consuming task
//! decides what to do.
//!
//! Ranges of the file are materialized as chunk blocks: the bytes are read
//! from the host at chunk creation, and written back when the chunk block
//! is destroyed — but only if some writing grant was ever issued on it, so
//! read-only consumers leave the file untouched. Two chunks may never
//! cover the same byte, even across destroyed chunks: a dead chunk's range
//! stays burned, which keeps "who last wrote this byte" well defined for
//! the file's whole lifetime.
//!
//! Releasing the file ends the handle: no new chunks, and the host file
//! closes once every chunk block is destroyed. Growing a writable file
//! happens eagerly, at chunk creation, so the host length is committed
//! even if the chunk is never written.

use std::io::{Read, Seek, SeekFrom, Write};

use crate::error::RuntimeError;
use crate::ident::{GlobalId, Identifier, NodeId, ObjectKind};
use crate::message::{FileMode, FileOp};
use crate::state::{ChunkBacking, ChunkRec, FileObj, Object, Runtime, Storage};

fn host_open(path: &str, mode: FileMode) -> std::io::Result<std::fs::File> {
    let mut opts = std::fs::OpenOptions::new();
    match mode {
        FileMode::ReadOnly => opts.read(true),
        FileMode::ReadWrite => opts.read(true).write(true),
        FileMode::ReadWriteCreate => opts.read(true).write(true).create(true).truncate(true),
    };
    opts.open(path)
}

impl Runtime {
    pub(crate) fn handle_file_op(&mut self, target: NodeId, op: FileOp) -> Result<(), RuntimeError> {
        match op {
            FileOp::Open { path, mode, want_descriptor, replies } => {
                self.file_open_at(target, path, mode, want_descriptor, replies)
            }
            FileOp::Chunk { file, offset, size, reply } => {
                let chunk = self.file_chunk_at(file, offset, size)?;
                if let Some(r) = reply {
                    self.send_reply(r, chunk)?;
                }
                Ok(())
            }
            FileOp::Release { file } => self.file_release_at(file),
        }
    }

    fn file_open_at(
        &mut self,
        target: NodeId,
        path: String,
        mode: FileMode,
        want_descriptor: bool,
        replies: Vec<crate::message::ReplyTo>,
    ) -> Result<(), RuntimeError> {
        let opened = host_open(&path, mode);
        let (host, size, open_failed) = match opened {
            Ok(f) => {
                let size = f.metadata().map_err(io_err)?.len();
                (Some(f), size, false)
            }
            Err(_) => (None, 0, true),
        };
        let fg = self.next_gid(target, ObjectKind::File);
        let mut created = vec![fg];
        if want_descriptor {
            let dg = self.create_block(target, 24, false, None)?;
            let view = self.make_view(dg, true)?;
            view.write_id(0, Identifier::Global(fg))?;
            view.write_u64(16, size)?;
            self.block_mut(dg)?.open_failed = open_failed;
            created.push(dg);
        }
        self.objects.insert(
            fg,
            Object::File(FileObj {
                mode,
                cur_size: size,
                host,
                chunks: Vec::new(),
                released: false,
                open_failed,
            }),
        );
        debug_assert!(replies.len() <= created.len(), "more replies than created objects");
        for (gid, reply) in created.into_iter().zip(replies) {
            self.send_reply(reply, gid)?;
        }
        Ok(())
    }

    pub(crate) fn file_chunk_at(
        &mut self,
        file: Identifier,
        offset: u64,
        size: u64,
    ) -> Result<GlobalId, RuntimeError> {
        let fg = file.as_global().ok_or(RuntimeError::InvalidId)?;
        if fg.kind != ObjectKind::File {
            return Err(RuntimeError::InvalidId);
        }
        let (bytes, home) = {
            let f = self.file_mut(fg)?;
            if f.released {
                return Err(RuntimeError::FileReleased);
            }
            if f.open_failed {
                return Err(RuntimeError::OpenFailed);
            }
            if size == 0 {
                return Err(RuntimeError::BadSize);
            }
            let end = offset.checked_add(size).ok_or(RuntimeError::BadRange)?;
            if f
                .chunks
                .iter()
                .any(|c| crate::datablock::ranges_overlap(offset, size, c.offset, c.size))
            {
                return Err(RuntimeError::ChunkOverlap);
            }
            let host = f.host.as_mut().expect("open file without a failed flag has a host handle");
            if end > f.cur_size {
                if !f.mode.writable() {
                    return Err(RuntimeError::BadRange);
                }
                // Commit the enlargement now; a chunk that is never
                // written still leaves the file this long.
                host.set_len(end).map_err(io_err)?;
                f.cur_size = end;
            }
            let mut buf = vec![0u8; size as usize];
            host.seek(SeekFrom::Start(offset)).map_err(io_err)?;
            let mut got = 0usize;
            while got < buf.len() {
                match host.read(&mut buf[got..]).map_err(io_err)? {
                    0 => break, // short file: remaining bytes stay zero
                    n => got += n,
                }
            }
            (buf, fg.node)
        };
        let chunk = self.create_block(home, size, false, None)?;
        {
            let b = self.block_mut(chunk)?;
            b.storage = Storage::Owned(std::rc::Rc::new(std::cell::RefCell::new(bytes)));
            b.backing = Some(ChunkBacking { file: fg, offset });
        }
        self.file_mut(fg)?.chunks.push(ChunkRec { offset, size, block: chunk, live: true });
        Ok(chunk)
    }

    pub(crate) fn file_release_at(&mut self, file: Identifier) -> Result<(), RuntimeError> {
        let fg = file.as_global().ok_or(RuntimeError::InvalidId)?;
        {
            let f = self.file_mut(fg)?;
            if f.released {
                return Err(RuntimeError::InvalidId);
            }
            f.released = true;
        }
        self.maybe_close_file(fg)
    }

    /// Write-back-and-detach step of a chunk block's destruction.
    pub(crate) fn chunk_finalize(
        &mut self,
        block: GlobalId,
        backing: ChunkBacking,
        write_back: bool,
    ) -> Result<(), RuntimeError> {
        if write_back {
            let (rc, off, len) = self.block_bytes(block)?;
            let f = self.file_mut(backing.file)?;
            let host = f.host.as_mut().expect("chunk outlives its host handle");
            host.seek(SeekFrom::Start(backing.offset)).map_err(io_err)?;
            host.write_all(&rc.borrow()[off as usize..(off + len) as usize])
                .map_err(io_err)?;
        }
        {
            let f = self.file_mut(backing.file)?;
            let rec = f
                .chunks
                .iter_mut()
                .find(|c| c.block == block)
                .expect("finalized chunk is registered on its file");
            rec.live = false;
        }
        self.maybe_close_file(backing.file)
    }

    /// Closes the host file and retires the file object once it has been
    /// released and no chunk block is left.
    fn maybe_close_file(&mut self, fg: GlobalId) -> Result<(), RuntimeError> {
        let done = {
            let f = self.file_mut(fg)?;
            f.released && f.chunks.iter().all(|c| !c.live)
        };
        if done {
            // Tombstoning drops the object, and with it the host handle.
            self.tombstone(fg);
        }
        Ok(())
    }
}

fn io_err(e: std::io::Error) -> RuntimeError {
    RuntimeError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctx::TaskCtx;
    use crate::datablock::DepRecord;
    use crate::harness::{Registry, RunConfig};

    fn noop(_: &mut TaskCtx<'_>, _: &[u64], _: &[DepRecord]) -> Result<Identifier, RuntimeError> {
        Ok(Identifier::Null)
    }

    fn rt() -> Runtime {
        let mut reg = Registry::new();
        reg.register_task("noop", noop);
        Runtime::new(reg, RunConfig::new("test"))
    }

    fn temp_with(bytes: &[u8]) -> (tempfile::TempDir, String) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.bin");
        std::fs::write(&path, bytes).unwrap();
        (dir, path.to_string_lossy().into_owned())
    }

    fn open(rt: &mut Runtime, path: &str, mode: FileMode) -> GlobalId {
        rt.file_open_at(NodeId(0), path.into(), mode, false, vec![]).unwrap();
        let fg = GlobalId { node: NodeId(0), seq: rt.node_seq[0], kind: ObjectKind::File };
        assert!(rt.file_mut(fg).is_ok());
        fg
    }

    #[test]
    fn descriptor_records_id_and_size() {
        let (_dir, path) = temp_with(&[1, 2, 3, 4, 5, 6]);
        let mut rt = rt();
        rt.file_open_at(NodeId(0), path, FileMode::ReadOnly, true, vec![]).unwrap();
        let fg = GlobalId { node: NodeId(0), seq: 1, kind: ObjectKind::File };
        let dg = GlobalId { node: NodeId(0), seq: 2, kind: ObjectKind::DataBlock };
        let v = rt.make_view(dg, false).unwrap();
        assert_eq!(v.read_id(0).unwrap(), Identifier::Global(fg));
        assert_eq!(v.read_u64(16).unwrap(), 6);
        assert!(!rt.block(dg).unwrap().open_failed);
    }

    #[test]
    fn failed_open_flags_descriptor_instead_of_erroring() {
        let mut rt = rt();
        rt.file_open_at(
            NodeId(0),
            "/nonexistent/definitely/missing.bin".into(),
            FileMode::ReadWrite,
            true,
            vec![],
        )
        .unwrap();
        let fg = GlobalId { node: NodeId(0), seq: 1, kind: ObjectKind::File };
        let dg = GlobalId { node: NodeId(0), seq: 2, kind: ObjectKind::DataBlock };
        assert!(rt.block(dg).unwrap().open_failed);
        assert_eq!(rt.make_view(dg, false).unwrap().read_u64(16).unwrap(), 0);
        assert_eq!(
            rt.file_chunk_at(Identifier::Global(fg), 0, 4),
            Err(RuntimeError::OpenFailed)
        );
    }

    #[test]
    fn chunk_reads_bytes_and_ranges_burn_forever() {
        let (_dir, path) = temp_with(&[1, 0, 0, 0, 2, 0, 0, 0]);
        let mut rt = rt();
        let fg = open(&mut rt, &path, FileMode::ReadOnly);
        let c = rt.file_chunk_at(Identifier::Global(fg), 4, 4).unwrap();
        assert_eq!(rt.make_view(c, false).unwrap().get_u32(0).unwrap(), 2);
        assert_eq!(
            rt.file_chunk_at(Identifier::Global(fg), 2, 4),
            Err(RuntimeError::ChunkOverlap)
        );
        // Destroying the chunk does not free its range.
        rt.destroy_block(c).unwrap();
        assert_eq!(
            rt.file_chunk_at(Identifier::Global(fg), 4, 4),
            Err(RuntimeError::ChunkOverlap)
        );
        // Disjoint ranges still work.
        assert!(rt.file_chunk_at(Identifier::Global(fg), 0, 4).is_ok());
    }

    #[test]
    fn read_only_chunks_cannot_pass_eof_and_zero_size_is_rejected() {
        let (_dir, path) = temp_with(&[9; 4]);
        let mut rt = rt();
        let fg = open(&mut rt, &path, FileMode::ReadOnly);
        assert_eq!(
            rt.file_chunk_at(Identifier::Global(fg), 2, 4),
            Err(RuntimeError::BadRange)
        );
        assert_eq!(
            rt.file_chunk_at(Identifier::Global(fg), 0, 0),
            Err(RuntimeError::BadSize)
        );
    }

    #[test]
    fn writable_chunk_extends_host_file_immediately() {
        let (_dir, path) = temp_with(&[7; 4]);
        let mut rt = rt();
        let fg = open(&mut rt, &path, FileMode::ReadWrite);
        rt.file_chunk_at(Identifier::Global(fg), 4, 8).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 12);
    }

    #[test]
    fn write_back_happens_only_after_a_writing_grant() {
        let (_dir, path) = temp_with(&[1, 1, 1, 1]);
        let mut rt = rt();
        let fg = open(&mut rt, &path, FileMode::ReadWrite);

        // Never granted for writing: destruction leaves the host alone.
        let c = rt.file_chunk_at(Identifier::Global(fg), 0, 2).unwrap();
        let (rc, off, _) = rt.block_bytes(c).unwrap();
        rc.borrow_mut()[off as usize] = 9;
        rt.destroy_block(c).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), vec![1, 1, 1, 1]);

        // With a writing grant on record the bytes flow back.
        let c = rt.file_chunk_at(Identifier::Global(fg), 2, 2).unwrap();
        rt.block_mut(c).unwrap().write_mode_seen = true;
        let (rc, off, _) = rt.block_bytes(c).unwrap();
        rc.borrow_mut()[off as usize] = 9;
        rt.destroy_block(c).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), vec![1, 1, 9, 1]);
    }

    #[test]
    fn release_defers_close_until_chunks_die() {
        let (_dir, path) = temp_with(&[5; 8]);
        let mut rt = rt();
        let fg = open(&mut rt, &path, FileMode::ReadOnly);
        let c = rt.file_chunk_at(Identifier::Global(fg), 0, 8).unwrap();
        rt.file_release_at(Identifier::Global(fg)).unwrap();
        // Released but a chunk is alive: handle persists, new chunks fail.
        assert!(rt.file_mut(fg).is_ok());
        assert_eq!(
            rt.file_chunk_at(Identifier::Global(fg), 8, 1),
            Err(RuntimeError::FileReleased)
        );
        assert_eq!(
            rt.file_release_at(Identifier::Global(fg)),
            Err(RuntimeError::InvalidId)
        );
        rt.destroy_block(c).unwrap();
        assert!(rt.is_destroyed(fg));
        assert_eq!(
            rt.file_release_at(Identifier::Global(fg)),
            Err(RuntimeError::InvalidId)
        );
    }

    #[test]
    fn truncating_mode_starts_empty() {
        let (_dir, path) = temp_with(&[3; 16]);
        let mut rt = rt();
        let fg = open(&mut rt, &path, FileMode::ReadWriteCreate);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 0);
        let c = rt.file_chunk_at(Identifier::Global(fg), 0, 4).unwrap();
        assert_eq!(rt.make_view(c, false).unwrap().get_u32(0).unwrap(), 0);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 4);
    }
}
